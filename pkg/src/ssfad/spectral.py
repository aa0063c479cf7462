"""Spectral branch: median-mean line projection, background enhancement,
local Mahalanobis scoring and saliency weighting.

Every pixel of the outer window is projected onto the line through the
window's per-band median and mean.  Ring projections, scaled by their
inverse-distance weight and contrasted against the projected testing pixel,
pass through a saturating enhancement before they estimate the local
covariance.  The Mahalanobis score of the testing pixel is multiplied by a
saliency weight built from spectral angles to the inner-window neighbors.

The per-pixel functions (:func:`lmml_project`, :func:`enhance_background`,
...) are the reference formulation; :func:`spectral_map` evaluates the same
arithmetic a row at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .core import DetectionMap, HyperCube, pad_symmetric
from .parallel import map_rows
from .windowing import (
    DualWindowSpec,
    WindowView,
    extract_dual_window,
    idw_weights,
    row_windows,
    window_offsets,
)

TEST_VECTOR_MODES = ("centered", "residual", "projection")
SALIENCY_INPUTS = ("original", "projected")
COVARIANCE_MODES = ("centered", "second_moment")

# relative threshold below which the median-mean line is treated as a point
LINE_EPS = 1e-12
# ridge used for the single retry when a covariance is not positive definite
RETRY_RIDGE_FLOOR = 1e-6


class SingularCovarianceError(np.linalg.LinAlgError):
    """The regularized covariance is not symmetric positive definite."""


@dataclass(frozen=True)
class SpectralParams:
    window: DualWindowSpec = field(default_factory=DualWindowSpec)
    c: float = 1.0
    ridge: float = 1e-6
    clamp_eta: bool = True
    test_vector_mode: str = "centered"
    saliency_input: str = "original"
    covariance_mode: str = "centered"

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"saliency constant c must be positive, got {self.c}")
        if not self.ridge >= 0:
            raise ValueError(f"ridge must be non-negative, got {self.ridge}")
        _check_choice("test_vector_mode", self.test_vector_mode, TEST_VECTOR_MODES)
        _check_choice("saliency_input", self.saliency_input, SALIENCY_INPUTS)
        _check_choice("covariance_mode", self.covariance_mode, COVARIANCE_MODES)


def _check_choice(name, value, allowed):
    if value not in allowed:
        raise ValueError(f"{name} must be one of {allowed}, got {value!r}")


@dataclass(frozen=True, eq=False)
class LmmlFrame:
    median: np.ndarray
    mean: np.ndarray
    denom: float

    @classmethod
    def from_pixels(cls, pixels) -> "LmmlFrame":
        """Frame of the N outer-window spectra (rows of ``pixels``)."""
        pixels = np.asarray(pixels, dtype=np.float64)
        median = np.median(pixels, axis=0)
        mean = pixels.mean(axis=0)
        d = mean - median
        return cls(median, mean, float(np.sum(d * d)))

    @property
    def degenerate(self) -> bool:
        return self.denom < LINE_EPS * max(1.0, float(np.sum(self.mean * self.mean)))


# --------------------------------------------------------------------------
# Per-pixel operations
# --------------------------------------------------------------------------

def lmml_project(pixels, frame: LmmlFrame, clamp: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Orthogonal projection of each spectrum onto the median-mean line.

    Returns ``(projections, etas)`` where ``projections[i] = (1 - eta_i) *
    median + eta_i * mean``.  A degenerate line (median ~ mean) sends every
    pixel to the mean with ``eta = 1``.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    single = pixels.ndim == 1
    pixels = np.atleast_2d(pixels)
    if pixels.shape[-1] != frame.mean.shape[0]:
        raise ValueError(f"pixels have {pixels.shape[-1]} bands, frame has {frame.mean.shape[0]}")
    if frame.degenerate:
        etas = np.ones(pixels.shape[0])
    else:
        d = frame.mean - frame.median
        # same reduction as the denominator, so a pixel equal to the mean gets eta == 1 exactly
        etas = np.sum((pixels - frame.median) * d, axis=-1) / frame.denom
        if clamp:
            etas = np.clip(etas, 0.0, 1.0)
    proj = (1.0 - etas)[:, None] * frame.median + etas[:, None] * frame.mean
    if single:
        return proj[0], etas[0]
    return proj, etas


def enhance_background(ring_projections, test_projection, idw) -> np.ndarray:
    """Saturating contrast of the projected test pixel against each ring pixel.

    ``out_s = (1 - exp(-|v_s| / 2)) * v_s`` with ``v_s = test - w_s * ring_s``.
    """
    ring = np.asarray(ring_projections, dtype=np.float64)
    test = np.asarray(test_projection, dtype=np.float64)
    idw = np.asarray(idw, dtype=np.float64)
    if ring.ndim != 2 or ring.shape[0] != idw.shape[0] or ring.shape[1] != test.shape[0]:
        raise ValueError(
            f"shape mismatch: ring {ring.shape}, test {test.shape}, weights {idw.shape}"
        )
    diff = test - ring * idw[:, None]
    norm = np.sqrt(np.einsum("sb,sb->s", diff, diff))
    return (-np.expm1(-0.5 * norm))[:, None] * diff


def effective_ridge(scatter: np.ndarray, ridge: float) -> float:
    """Ridge scaled by the mean diagonal of ``scatter`` (raw ridge if trace is 0)."""
    bands = scatter.shape[-1]
    trace = float(np.trace(scatter))
    return ridge * trace / bands if trace > 0 else ridge


def local_covariance(enhanced, ridge: float = 1e-6, mode: str = "centered") -> np.ndarray:
    """Regularized covariance of the S enhanced background vectors."""
    _check_choice("covariance_mode", mode, COVARIANCE_MODES)
    x = np.asarray(enhanced, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("local_covariance needs at least one background sample")
    if mode == "centered":
        x = x - x.mean(axis=0)
    sigma = np.einsum("si,sj->ij", x, x) / x.shape[0]
    sigma[np.diag_indices_from(sigma)] += effective_ridge(sigma, ridge)
    return sigma


def _check_spd(sigma: np.ndarray) -> None:
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("covariance is not positive definite") from exc


def mahalanobis_score(vector, sigma) -> float:
    """``v^T sigma^-1 v`` through a linear solve; ``sigma`` must be SPD."""
    v = np.asarray(vector, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    _check_spd(sigma)
    x = np.linalg.solve(sigma, v)
    return max(float(v @ x), 0.0)


def regularized_mahalanobis(scatter: np.ndarray, vector: np.ndarray, ridge: float) -> float:
    """Score against ``scatter + ridge_eff * I``, retrying once with a larger ridge."""
    sigma = scatter.copy()
    sigma[np.diag_indices_from(sigma)] += effective_ridge(scatter, ridge)
    try:
        return mahalanobis_score(vector, sigma)
    except SingularCovarianceError:
        sigma = scatter.copy()
        sigma[np.diag_indices_from(sigma)] += effective_ridge(scatter, max(10.0 * ridge, RETRY_RIDGE_FLOOR))
        return mahalanobis_score(vector, sigma)


def saliency_weight(test, test_coord, inner_spectra, inner_coords, c: float = 1.0) -> float:
    """Mean spectral angle to the inner neighbors, damped by pixel distance.

    Each neighbor contributes ``angle / (1 + c * distance)``.  A flat (zero)
    spectrum contributes angle 0; with no inner neighbors the weight is 1.
    """
    inner = np.asarray(inner_spectra, dtype=np.float64).reshape(-1, np.size(test))
    if inner.shape[0] == 0:
        return 1.0
    test = np.asarray(test, dtype=np.float64)
    delta = np.asarray(inner_coords, dtype=np.float64).reshape(-1, 2) - np.asarray(test_coord, dtype=np.float64)
    d_pos = np.sqrt(np.einsum("ij,ij->i", delta, delta))
    d_spe = _spectral_angles(test[None, :], inner[None, :, :])[0]
    return float(np.mean(d_spe / (1.0 + c * d_pos)))


def _spectral_angles(test: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Angles between ``test`` (P, B) and each of ``neighbors`` (P, M, B)."""
    dots = np.einsum("pmb,pb->pm", neighbors, test)
    norms = np.sqrt(np.einsum("pmb,pmb->pm", neighbors, neighbors)) * np.sqrt(np.einsum("pb,pb->p", test, test))[:, None]
    flat = norms == 0
    cos = np.divide(dots, norms, out=np.ones_like(dots), where=~flat)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def _test_vector(mode: str, y, y_proj, mean):
    if mode == "centered":
        return y - mean
    if mode == "residual":
        return y - y_proj
    return y_proj


def spectral_score_at(view: WindowView, params: SpectralParams) -> float:
    """Spectral score of one testing pixel, composed from the per-pixel steps."""
    frame = LmmlFrame.from_pixels(view.outer_spectra)
    ring_proj, _ = lmml_project(view.ring_spectra, frame, params.clamp_eta)
    y = view.center
    y_proj, _ = lmml_project(y, frame, params.clamp_eta)
    idw = idw_weights(view.coord, view.ring_coords)
    enhanced = enhance_background(ring_proj, y_proj, idw)
    sigma = local_covariance(enhanced, 0.0, params.covariance_mode)
    v = _test_vector(params.test_vector_mode, y, y_proj, frame.mean)
    r = regularized_mahalanobis(sigma, v, params.ridge)
    if params.saliency_input == "original":
        test, inner = y, view.inner_spectra
    else:
        test = y_proj
        inner, _ = lmml_project(view.inner_spectra, frame, params.clamp_eta)
    w_sal = saliency_weight(test, view.coord, inner, view.inner_coords, params.c)
    return r * w_sal


# --------------------------------------------------------------------------
# Whole-map evaluation
# --------------------------------------------------------------------------

def batched_mahalanobis(scatter: np.ndarray, vectors: np.ndarray, ridge: float) -> np.ndarray:
    """Row-batched :func:`regularized_mahalanobis` over (P, B, B) scatters."""
    bands = scatter.shape[-1]
    trace = np.trace(scatter, axis1=1, axis2=2)
    ridge_eff = np.where(trace > 0, ridge * trace / bands, ridge)
    sigma = scatter + ridge_eff[:, None, None] * np.eye(bands)
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        return np.array([regularized_mahalanobis(s, v, ridge) for s, v in zip(scatter, vectors)])
    x = np.linalg.solve(sigma, vectors[..., None])[..., 0]
    return np.maximum(np.einsum("pb,pb->p", vectors, x), 0.0)


class _SpectralRow:
    """Per-row evaluator holding the geometry shared by every pixel."""

    def __init__(self, padded: np.ndarray, width: int, params: SpectralParams):
        self.padded = padded
        self.width = width
        self.params = params
        spec = params.window
        self.side = spec.omega_out
        geom = window_offsets(spec)
        self.geom = geom
        self.idw = idw_weights((0, 0), geom.offsets[geom.ring])
        inner_off = geom.offsets[geom.inner].astype(np.float64)
        self.inner_dpos = np.sqrt(np.einsum("ij,ij->i", inner_off, inner_off))

    def __call__(self, row: int) -> np.ndarray:
        p, g = self.params, self.geom
        x = row_windows(self.padded, row, self.width, self.side)        # (W, N, B)
        median = np.median(x, axis=1)
        mean = x.mean(axis=1)
        d = mean - median
        denom = np.sum(d * d, axis=-1)
        degenerate = denom < LINE_EPS * np.maximum(1.0, np.sum(mean * mean, axis=-1))
        safe = np.where(degenerate, 1.0, denom)
        eta = np.sum((x - median[:, None, :]) * d[:, None, :], axis=-1) / safe[:, None]
        if p.clamp_eta:
            eta = np.clip(eta, 0.0, 1.0)
        eta[degenerate] = 1.0
        proj = (1.0 - eta)[..., None] * median[:, None, :] + eta[..., None] * mean[:, None, :]

        y = x[:, g.center]
        y_proj = proj[:, g.center]
        diff = y_proj[:, None, :] - proj[:, g.ring] * self.idw[None, :, None]
        norm = np.sqrt(np.einsum("wsb,wsb->ws", diff, diff))
        enhanced = (-np.expm1(-0.5 * norm))[..., None] * diff
        if p.covariance_mode == "centered":
            enhanced = enhanced - enhanced.mean(axis=1, keepdims=True)
        scatter = np.einsum("wsi,wsj->wij", enhanced, enhanced) / enhanced.shape[1]

        v = _test_vector(p.test_vector_mode, y, y_proj, mean)
        r = batched_mahalanobis(scatter, v, p.ridge)

        if g.inner.size == 0:
            return r
        if p.saliency_input == "original":
            test, inner = y, x[:, g.inner]
        else:
            test, inner = y_proj, proj[:, g.inner]
        d_sal = _spectral_angles(test, inner) / (1.0 + p.c * self.inner_dpos)
        return r * d_sal.mean(axis=1)


def spectral_map(cube: HyperCube, params: Optional[SpectralParams] = None, threads: Optional[int] = None) -> DetectionMap:
    """Spectral detection map of ``cube`` (symmetric padding at the borders)."""
    params = params or SpectralParams()
    padded = pad_symmetric(cube, params.window.radius).values
    row_fn = _SpectralRow(padded, cube.width, params)
    return DetectionMap(map_rows(row_fn, cube.height, threads))


def spectral_map_reference(cube: HyperCube, params: Optional[SpectralParams] = None) -> DetectionMap:
    """Pixel-by-pixel evaluation through :func:`spectral_score_at` (slow)."""
    params = params or SpectralParams()
    pad = params.window.radius
    padded = pad_symmetric(cube, pad)
    scores = np.empty((cube.height, cube.width))
    for i in range(cube.height):
        for j in range(cube.width):
            view = extract_dual_window(padded, (i, j), params.window, pad)
            scores[i, j] = spectral_score_at(view, params)
    return DetectionMap(scores)
