"""Dual-window geometry around a testing pixel.

The outer window of side ``omega_out`` is split into the center pixel, the
inner (guard) neighbors of the ``omega_in`` window, and the ring of
background pixels between the two windows.  Offsets are enumerated
row-major, so every pixel sees its neighbors in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import HyperCube, PixelCoord


@dataclass(frozen=True)
class DualWindowSpec:
    omega_out: int = 5
    omega_in: int = 3

    def __post_init__(self):
        if self.omega_out < 3 or self.omega_out % 2 == 0:
            raise ValueError(f"omega_out must be an odd integer >= 3, got {self.omega_out}")
        if self.omega_in < 1 or self.omega_in % 2 == 0:
            raise ValueError(f"omega_in must be an odd integer >= 1, got {self.omega_in}")
        if self.omega_out <= self.omega_in:
            raise ValueError(
                f"omega_out ({self.omega_out}) must exceed omega_in ({self.omega_in})"
            )

    @property
    def radius(self) -> int:
        return (self.omega_out - 1) // 2

    @property
    def inner_radius(self) -> int:
        return (self.omega_in - 1) // 2

    @property
    def n_outer(self) -> int:
        return self.omega_out * self.omega_out

    @property
    def n_ring(self) -> int:
        return self.omega_out * self.omega_out - self.omega_in * self.omega_in

    @property
    def n_inner(self) -> int:
        return self.omega_in * self.omega_in - 1


@dataclass(frozen=True)
class WindowOffsets:
    """Index sets into the row-major ``omega_out**2`` offset list."""

    offsets: np.ndarray   # (N, 2) integer (drow, dcol)
    center: int
    inner: np.ndarray     # indices of the M inner neighbors
    ring: np.ndarray      # indices of the S ring pixels


def window_offsets(spec: DualWindowSpec) -> WindowOffsets:
    r, ri = spec.radius, spec.inner_radius
    d = np.arange(-r, r + 1)
    offsets = np.stack(np.meshgrid(d, d, indexing="ij"), axis=-1).reshape(-1, 2)
    cheb = np.abs(offsets).max(axis=1)
    center = int(np.flatnonzero(cheb == 0)[0])
    inner = np.flatnonzero((cheb <= ri) & (cheb > 0))
    ring = np.flatnonzero(cheb > ri)
    return WindowOffsets(offsets, center, inner, ring)


@dataclass(frozen=True, eq=False)
class WindowView:
    """Spectra and absolute coordinates of one testing pixel's dual window.

    Coordinates are in the unpadded frame, so pixels mirrored in from
    beyond the border carry coordinates outside the image.
    """

    coord: PixelCoord
    center: np.ndarray
    inner_coords: np.ndarray
    inner_spectra: np.ndarray
    ring_coords: np.ndarray
    ring_spectra: np.ndarray
    outer_coords: np.ndarray
    outer_spectra: np.ndarray


def extract_dual_window(padded: HyperCube, coord, spec: DualWindowSpec, pad: int = None) -> WindowView:
    """Cut the dual window around ``coord`` out of a padded cube.

    ``pad`` is the padding width applied to ``padded`` and defaults to the
    window radius.  ``coord`` is given in the unpadded frame.
    """
    if pad is None:
        pad = spec.radius
    if pad < spec.radius:
        raise ValueError(f"cube padded by {pad}, window needs {spec.radius}")
    row, col = int(coord[0]), int(coord[1])
    height, width = padded.height - 2 * pad, padded.width - 2 * pad
    if not (0 <= row < height and 0 <= col < width):
        raise IndexError(f"pixel ({row}, {col}) outside the {height}x{width} interior")

    geom = window_offsets(spec)
    offsets = geom.offsets
    coords = offsets + np.array([row, col])
    spectra = padded.values[coords[:, 0] + pad, coords[:, 1] + pad]
    return WindowView(
        coord=PixelCoord(row, col),
        center=spectra[geom.center],
        inner_coords=coords[geom.inner],
        inner_spectra=spectra[geom.inner],
        ring_coords=coords[geom.ring],
        ring_spectra=spectra[geom.ring],
        outer_coords=coords,
        outer_spectra=spectra,
    )


def idw_weights(center, neighbors: Sequence) -> np.ndarray:
    """Inverse-squared-distance weights, normalized to sum to one."""
    neighbors = np.asarray(neighbors, dtype=np.float64).reshape(-1, 2)
    delta = neighbors - np.asarray(center, dtype=np.float64)
    dist2 = np.einsum("ij,ij->i", delta, delta)
    if np.any(dist2 == 0):
        raise ValueError("a neighbor coincides with the center pixel")
    inv = 1.0 / dist2
    return inv / inv.sum()


def row_windows(padded: np.ndarray, row: int, width: int, side: int) -> np.ndarray:
    """All ``side x side`` windows centered on one output row, as (W, N, B)."""
    band = padded[row:row + side]
    win = sliding_window_view(band, (side, side), axis=(0, 1))[0, :width]
    # (W, B, side, side) -> (W, side*side, B), row-major offsets
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1)).reshape(width, side * side, -1)
