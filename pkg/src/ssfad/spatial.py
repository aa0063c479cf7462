"""Spatial branch: minimum patch dissimilarity against the surrounding ring.

The ``omega x omega`` patch centered on the testing pixel is compared with
the 8*omega equally sized patches whose centers sit at Chebyshev distance
``omega``, i.e. the patches that tile the ring around it.  A pixel whose
patch resembles none of its neighbors scores high.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import DetectionMap, HyperCube, pad_symmetric


@dataclass(frozen=True)
class SpatialParams:
    omega: int = 3

    def __post_init__(self):
        if self.omega < 1 or self.omega % 2 == 0:
            raise ValueError(f"omega must be an odd integer >= 1, got {self.omega}")


def ring_window_offsets(omega: int) -> List[Tuple[int, int]]:
    """The 8*omega offsets at Chebyshev distance ``omega``, clockwise from the top-left corner."""
    if omega < 1:
        raise ValueError(f"omega must be >= 1, got {omega}")
    top = [(-omega, c) for c in range(-omega, omega)]
    right = [(r, omega) for r in range(-omega, omega)]
    bottom = [(omega, c) for c in range(omega, -omega, -1)]
    left = [(r, -omega) for r in range(omega, -omega, -1)]
    return top + right + bottom + left


def patch_dissimilarity(patch_a, patch_b) -> float:
    """Squared Frobenius distance summed over all bands."""
    a = np.asarray(patch_a, dtype=np.float64)
    b = np.asarray(patch_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"patch shapes differ: {a.shape} vs {b.shape}")
    diff = (a - b).ravel()
    return float(diff @ diff)


def spatial_map(cube: HyperCube, params: Optional[SpatialParams] = None, offsets=None) -> DetectionMap:
    """Spatial detection map of ``cube``.

    ``offsets`` overrides the ring enumeration (used to check that the
    result does not depend on its order).
    """
    params = params or SpatialParams()
    omega = params.omega
    half = (omega - 1) // 2
    pad = 2 * omega
    padded = pad_symmetric(cube, pad).values
    height, width = cube.height, cube.width
    if offsets is None:
        offsets = ring_window_offsets(omega)

    # the center patch of output pixel (i, j) covers padded rows
    # pad+i-half .. pad+i+half; stage it once
    lo = pad - half
    center = padded[lo:lo + height + omega - 1, lo:lo + width + omega - 1]

    best = None
    for dr, dc in offsets:
        shifted = padded[lo + dr:lo + dr + height + omega - 1, lo + dc:lo + dc + width + omega - 1]
        diff = center - shifted
        per_pixel = np.einsum("ijb,ijb->ij", diff, diff)
        score = sliding_window_view(per_pixel, (omega, omega)).sum(axis=(2, 3))
        best = score if best is None else np.minimum(best, score)
    return DetectionMap(best)


def spatial_score_at(cube: HyperCube, coord, params: Optional[SpatialParams] = None) -> float:
    """Score of a single pixel by explicit patch comparison (reference path)."""
    params = params or SpatialParams()
    omega = params.omega
    half = (omega - 1) // 2
    pad = 2 * omega
    padded = pad_symmetric(cube, pad).values
    r, c = coord[0] + pad, coord[1] + pad

    def patch(pr, pc):
        return padded[pr - half:pr + half + 1, pc - half:pc + half + 1]

    center = patch(r, c)
    return min(patch_dissimilarity(center, patch(r + dr, c + dc)) for dr, dc in ring_window_offsets(omega))
