"""Blend the spectral and spatial maps into the final detection map.

Both maps are rescaled to [0, 1] first, since Mahalanobis scores and patch
distances live on unrelated scales.  The adaptive rule weights each map by
its largest singular value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import DetectionMap, minmax_normalize

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 1000


class ConvergenceWarning(UserWarning):
    """Power iteration stopped at ``max_iter`` before reaching ``tol``."""


@dataclass(frozen=True)
class FusionWeights:
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a <= 1.0 and 0.0 <= self.b <= 1.0):
            raise ValueError(f"fusion weights must lie in [0, 1], got a={self.a}, b={self.b}")
        if abs(self.a + self.b - 1.0) > 1e-12:
            raise ValueError(f"fusion weights must sum to 1, got {self.a + self.b}")


AVERAGE = FusionWeights(0.5, 0.5)


class PowerIterationResult(NamedTuple):
    sigma: float
    iterations: int
    converged: bool


def power_iteration(matrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> PowerIterationResult:
    """Largest singular value of ``matrix`` by power iteration on ``R^T R``.

    ``R^T R`` is applied as two matrix-vector products and never formed.
    The start vector is all ones.  Iteration stops once the Rayleigh
    estimate of ``lambda_max`` changes by less than ``tol`` relatively.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    r = np.asarray(matrix, dtype=np.float64)
    if r.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {r.shape}")
    if not np.any(r):
        return PowerIterationResult(0.0, 0, True)

    v = np.full(r.shape[1], 1.0 / np.sqrt(r.shape[1]))
    lam = None
    for it in range(1, max_iter + 1):
        u = r @ v
        w = r.T @ u
        lam_new = float(u @ u)          # v^T R^T R v with |v| = 1
        norm = np.sqrt(w @ w)
        if norm == 0:
            # start vector orthogonal to the row space; fall back to the largest column
            v = np.zeros(r.shape[1])
            v[np.argmax(np.einsum("ij,ij->j", r, r))] = 1.0
            lam = None
            continue
        v = w / norm
        if lam is not None and abs(lam_new - lam) <= tol * lam_new:
            break
        lam = lam_new
    else:
        return PowerIterationResult(_rayleigh_sigma(r, v), max_iter, False)
    return PowerIterationResult(_rayleigh_sigma(r, v), it, True)


def _rayleigh_sigma(r: np.ndarray, v: np.ndarray) -> float:
    u = r @ v
    return float(np.sqrt(u @ u))


def spectral_norm(dmap, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Largest singular value of a score map.

    Emits :class:`ConvergenceWarning` and returns the best estimate when the
    iteration budget runs out.
    """
    scores = dmap.scores if isinstance(dmap, DetectionMap) else dmap
    result = power_iteration(scores, tol, max_iter)
    if not result.converged:
        warnings.warn(
            f"power iteration did not converge in {max_iter} iterations; "
            f"spectral norm {result.sigma:.6g} has degraded precision",
            ConvergenceWarning,
            stacklevel=2,
        )
    return result.sigma


def _check_shapes(r1: DetectionMap, r2: DetectionMap) -> None:
    if r1.shape != r2.shape:
        raise ValueError(f"map shapes differ: {r1.shape} vs {r2.shape}")


def adaptive_weights(r1: DetectionMap, r2: DetectionMap) -> FusionWeights:
    """Weights proportional to the spectral norms of the normalized maps."""
    _check_shapes(r1, r2)
    s1 = spectral_norm(minmax_normalize(r1))
    s2 = spectral_norm(minmax_normalize(r2))
    total = s1 + s2
    if total == 0:
        raise ValueError("both maps are constant after normalization; nothing to fuse")
    return FusionWeights(s1 / total, s2 / total)


def fuse(r1: DetectionMap, r2: DetectionMap, weights: FusionWeights) -> DetectionMap:
    """``a * norm(r1) + b * norm(r2)`` element-wise."""
    _check_shapes(r1, r2)
    n1 = minmax_normalize(r1).scores
    n2 = minmax_normalize(r2).scores
    return DetectionMap(weights.a * n1 + weights.b * n2)


def fuse_average(r1: DetectionMap, r2: DetectionMap) -> DetectionMap:
    return fuse(r1, r2, AVERAGE)


def fuse_adaptive(r1: DetectionMap, r2: DetectionMap):
    """Adaptive fusion; returns ``(fused_map, weights)``."""
    weights = adaptive_weights(r1, r2)
    return fuse(r1, r2, weights), weights
