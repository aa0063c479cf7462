"""Raster containers, file IO, border padding and score normalization.

Cubes live on disk as a plain-text ``key=value`` header next to a raw,
band-sequential, little-endian data file::

    height=100
    width=100
    bands=20
    dtype=float32
    interleave=bsq
    byteorder=little
    data_file=scene.raw

Masks and previews are 8-bit binary PGM (``P5``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

PathLike = Union[str, os.PathLike]

_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}
_REQUIRED_KEYS = ("height", "width", "bands", "dtype")


class FormatError(ValueError):
    """A header, data file or mask does not match the expected layout."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.flags.writeable = False
    return array


class PixelCoord(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True, eq=False)
class HyperCube:
    """An ``H x W x B`` stack of spectra, held in double precision.

    ``values[r, c, b]`` is band ``b`` of the pixel at row ``r``, column ``c``.
    The array is copied on construction and marked read-only.
    """

    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3 or min(values.shape) < 1:
            raise ValueError(f"cube must be H x W x B with positive sizes, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("cube contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape

    def spectrum(self, row: int, col: int) -> np.ndarray:
        return self.values[row, col]


@dataclass(frozen=True, eq=False)
class GroundTruthMask:
    """Per-pixel labels, 1 for anomaly and 0 for background."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, copy=True)
        if labels.ndim != 2 or min(labels.shape) < 1:
            raise ValueError(f"mask must be a non-empty 2-D array, got shape {labels.shape}")
        labels = (labels > 0).astype(np.uint8)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape

    @property
    def n_anomalies(self) -> int:
        return int(self.labels.sum())


@dataclass(frozen=True, eq=False)
class DetectionMap:
    """Per-pixel anomaly scores; larger means more anomalous."""

    scores: np.ndarray

    def __post_init__(self):
        scores = _frozen(self.scores)
        if scores.ndim != 2 or min(scores.shape) < 1:
            raise ValueError(f"map must be a non-empty 2-D array, got shape {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise ValueError("detection map contains non-finite scores")
        object.__setattr__(self, "scores", scores)

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.scores.shape


# --------------------------------------------------------------------------
# Header parsing
# --------------------------------------------------------------------------

def read_header(path: PathLike) -> dict:
    """Parse a ``key=value`` header into a dict of stripped strings.

    Blank lines and lines starting with ``#`` are ignored.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"header not found: {path}")
    fields = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            fields[key.strip().lower()] = value.strip()
    return fields


def write_header(path: PathLike, fields: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for key, value in fields.items():
            fh.write(f"{key}={value}\n")


def _positive_int(fields: dict, key: str, path) -> int:
    try:
        value = int(fields[key])
    except (KeyError, ValueError):
        raise FormatError(f"{path}: header field {key!r} missing or not an integer") from None
    if value < 1:
        raise FormatError(f"{path}: header field {key!r} must be positive, got {value}")
    return value


def _data_path(header_path: Path, fields: dict, suffix: str = ".raw") -> Path:
    name = fields.get("data_file")
    if name:
        return header_path.parent / name
    return header_path.with_suffix(suffix)


def _check_path(path: PathLike) -> Path:
    if path is None or str(path) == "":
        raise OSError("empty output path")
    return Path(path)


# --------------------------------------------------------------------------
# Cubes and maps
# --------------------------------------------------------------------------

def load_cube(header_path: PathLike) -> HyperCube:
    """Read a band-sequential cube from its header and sibling data file.

    Element ``b*H*W + r*W + c`` of the data file becomes ``value(r, c, b)``.
    """
    header_path = Path(header_path)
    fields = read_header(header_path)
    for key in _REQUIRED_KEYS:
        if key not in fields:
            raise FormatError(f"{header_path}: header lacks {key!r}")
    height = _positive_int(fields, "height", header_path)
    width = _positive_int(fields, "width", header_path)
    bands = _positive_int(fields, "bands", header_path)
    dtype_name = fields["dtype"].lower()
    if dtype_name not in _DTYPES:
        raise FormatError(f"{header_path}: unsupported dtype {dtype_name!r}")
    if fields.get("interleave", "bsq").lower() != "bsq":
        raise FormatError(f"{header_path}: only bsq interleave is supported")
    if fields.get("byteorder", "little").lower() != "little":
        raise FormatError(f"{header_path}: only little-endian data is supported")

    data_path = _data_path(header_path, fields)
    if not data_path.is_file():
        raise FileNotFoundError(f"data file not found: {data_path}")
    dtype = _DTYPES[dtype_name]
    expected = height * width * bands * dtype.itemsize
    actual = data_path.stat().st_size
    if actual != expected:
        raise FormatError(
            f"{data_path}: size mismatch, header implies {expected} bytes but file has {actual}"
        )
    flat = np.fromfile(data_path, dtype=dtype)
    if not np.all(np.isfinite(flat)):
        raise FormatError(f"{data_path}: non-finite value in data")
    planes = flat.reshape(bands, height, width)
    return HyperCube(np.moveaxis(planes, 0, -1))


def save_cube(cube: HyperCube, header_path: PathLike, dtype: str = "float64") -> None:
    """Write ``cube`` as header plus raw little-endian band-sequential data."""
    header_path = _check_path(header_path)
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    data_path = header_path.with_suffix(".raw")
    planes = np.ascontiguousarray(np.moveaxis(cube.values, -1, 0), dtype=_DTYPES[dtype])
    planes.tofile(data_path)
    write_header(header_path, {
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "dtype": dtype,
        "interleave": "bsq",
        "byteorder": "little",
        "data_file": data_path.name,
    })


def save_map(dmap: DetectionMap, header_path: PathLike, preview: Optional[PathLike] = None) -> None:
    """Write scores as a single-band float32 cube, optionally with a PGM preview."""
    save_cube(HyperCube(dmap.scores[:, :, None]), header_path, dtype="float32")
    if preview is not None:
        save_preview(dmap, preview)


def load_map(header_path: PathLike) -> DetectionMap:
    cube = load_cube(header_path)
    if cube.bands != 1:
        raise FormatError(f"{header_path}: a detection map has one band, found {cube.bands}")
    return DetectionMap(cube.values[:, :, 0])


def preview_bytes(dmap: DetectionMap) -> np.ndarray:
    """Normalized scores scaled to 0..255 with round-half-up."""
    unit = minmax_normalize(dmap).scores
    return np.floor(unit * 255.0 + 0.5).astype(np.uint8)


def save_preview(dmap: DetectionMap, path: PathLike) -> None:
    write_pgm(_check_path(path), preview_bytes(dmap))


# --------------------------------------------------------------------------
# Masks
# --------------------------------------------------------------------------

def _pgm_tokens(blob: bytes, count: int) -> Tuple[list, int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace() and blob[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(blob[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path: PathLike) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {blob[:2]!r})")
    tokens, offset = _pgm_tokens(blob[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"{path}: malformed PGM dimensions") from None
    if width < 1 or height < 1:
        raise FormatError(f"{path}: malformed PGM dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM (maxval 255) is supported, got {maxval}")
    raster = blob[2 + offset:2 + offset + width * height]
    if len(raster) != width * height:
        raise FormatError(f"{path}: PGM raster truncated")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def write_pgm(path: PathLike, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def load_mask(path: PathLike, expected_shape: Optional[Tuple[int, int]] = None) -> GroundTruthMask:
    """Load a ground-truth mask; any non-zero byte marks an anomaly.

    Accepts binary PGM or, when ``path`` is a header, raw ``uint8`` data
    described by ``height``/``width`` keys.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mask not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        pixels = read_pgm(path)
    elif magic[:1] == b"P":
        raise FormatError(f"{path}: unsupported PNM variant {magic!r}")
    else:
        fields = read_header(path)
        height = _positive_int(fields, "height", path)
        width = _positive_int(fields, "width", path)
        if fields.get("dtype", "uint8").lower() != "uint8":
            raise FormatError(f"{path}: raw masks must be uint8")
        data_path = _data_path(path, fields)
        if not data_path.is_file():
            raise FileNotFoundError(f"mask data not found: {data_path}")
        if data_path.stat().st_size != height * width:
            raise FormatError(f"{data_path}: size mismatch for {height}x{width} uint8 mask")
        pixels = np.fromfile(data_path, dtype=np.uint8).reshape(height, width)
    if expected_shape is not None and tuple(pixels.shape) != tuple(expected_shape):
        raise FormatError(f"{path}: mask shape {pixels.shape} does not match {tuple(expected_shape)}")
    return GroundTruthMask(pixels)


def save_mask(mask: GroundTruthMask, path: PathLike) -> None:
    write_pgm(_check_path(path), mask.labels * 255)


# --------------------------------------------------------------------------
# Padding and normalization
# --------------------------------------------------------------------------

def pad_symmetric(cube: HyperCube, radius: int) -> HyperCube:
    """Mirror ``radius`` pixels across each border, edge pixel included.

    Pad index -1 maps to source index 0, -2 to 1, and so on.  Radii larger
    than the image reflect repeatedly.
    """
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if radius == 0:
        return cube
    return HyperCube(np.pad(cube.values, ((radius, radius), (radius, radius), (0, 0)), mode="symmetric"))


def minmax_normalize(dmap: DetectionMap) -> DetectionMap:
    """Affine rescale to [0, 1]; a constant map becomes all zeros."""
    scores = dmap.scores
    lo, hi = scores.min(), scores.max()
    if hi == lo:
        return DetectionMap(np.zeros_like(scores))
    out = (scores - lo) / (hi - lo)
    # guard the endpoints against rounding just outside [0, 1]
    return DetectionMap(np.clip(out, 0.0, 1.0))
