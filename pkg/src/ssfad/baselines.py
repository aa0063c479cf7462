"""Global and local RX reference detectors."""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .core import DetectionMap, HyperCube, pad_symmetric
from .parallel import map_rows
from .spectral import batched_mahalanobis, regularized_mahalanobis
from .windowing import DualWindowSpec, row_windows, window_offsets


def grx_map(cube: HyperCube, ridge: float = 1e-6) -> DetectionMap:
    """Mahalanobis distance of every pixel from the image-wide mean and covariance."""
    x = cube.values.reshape(-1, cube.bands)
    mu = x.mean(axis=0)
    centered = x - mu
    scatter = centered.T @ centered / x.shape[0]
    bands = cube.bands
    trace = float(np.trace(scatter))
    sigma = scatter + (ridge * trace / bands if trace > 0 else ridge) * np.eye(bands)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            "global covariance is singular; use a positive ridge"
        ) from None
    # |L^-1 (x - mu)|^2, one triangular solve for all pixels
    z = solve_triangular(chol, centered.T, lower=True)
    scores = np.einsum("bp,bp->p", z, z)
    return DetectionMap(scores.reshape(cube.height, cube.width))


class _LrxRow:
    def __init__(self, padded: np.ndarray, width: int, spec: DualWindowSpec, ridge: float):
        self.padded = padded
        self.width = width
        self.spec = spec
        self.ridge = ridge
        self.geom = window_offsets(spec)

    def __call__(self, row: int) -> np.ndarray:
        x = row_windows(self.padded, row, self.width, self.spec.omega_out)
        y = x[:, self.geom.center]
        # statistics relative to the test pixel keep flat neighborhoods exactly zero
        rel = x[:, self.geom.ring] - y[:, None, :]
        shift = rel.mean(axis=1)
        centered = rel - shift[:, None, :]
        scatter = np.einsum("wsi,wsj->wij", centered, centered) / rel.shape[1]
        return batched_mahalanobis(scatter, -shift, self.ridge)


def lrx_map(cube: HyperCube, spec: Optional[DualWindowSpec] = None, ridge: float = 1e-6,
            threads: Optional[int] = None) -> DetectionMap:
    """RX with mean and covariance taken from each pixel's outer ring."""
    spec = spec or DualWindowSpec()
    padded = pad_symmetric(cube, spec.radius).values
    return DetectionMap(map_rows(_LrxRow(padded, cube.width, spec, ridge), cube.height, threads))


def lrx_score(ring_spectra, test_spectrum, ridge: float = 1e-6) -> float:
    """LRX score of one pixel from its ring spectra."""
    y = np.asarray(test_spectrum, dtype=np.float64)
    rel = np.asarray(ring_spectra, dtype=np.float64) - y
    shift = rel.mean(axis=0)
    centered = rel - shift
    scatter = centered.T @ centered / rel.shape[0]
    return regularized_mahalanobis(scatter, -shift, ridge)
