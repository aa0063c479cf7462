"""ROC curves, AUC and boxplot-style separability statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import DetectionMap, GroundTruthMask, PathLike


@dataclass(frozen=True, eq=False)
class RocCurve:
    """ROC points ordered from the strictest threshold (+inf) to the loosest."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass(frozen=True)
class ClassStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


@dataclass(frozen=True)
class SeparabilityStats:
    anomaly: ClassStats
    background: ClassStats

    @property
    def interval(self) -> float:
        """Gap between the anomaly box bottom and the background box top."""
        return self.anomaly.q1 - self.background.q3


def _split(dmap: DetectionMap, mask: GroundTruthMask):
    if dmap.shape != mask.shape:
        raise ValueError(f"map shape {dmap.shape} does not match mask shape {mask.shape}")
    labels = mask.labels.ravel().astype(bool)
    scores = dmap.scores.ravel()
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise ValueError("evaluation needs at least one anomaly and one background pixel")
    return scores, labels


def roc_curve(dmap: DetectionMap, mask: GroundTruthMask) -> RocCurve:
    """ROC over every distinct score, detecting pixels with ``score >= threshold``."""
    scores, labels = _split(dmap, mask)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    # last index of each run of tied scores
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    tpr = np.r_[0.0, tp / y.sum()]
    fpr = np.r_[0.0, fp / (~y).sum()]
    thresholds = np.r_[np.inf, s[last]]
    return RocCurve(fpr, tpr, thresholds)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the ROC curve."""
    return float(np.trapezoid(curve.tpr, curve.fpr))


def roc_auc(dmap: DetectionMap, mask: GroundTruthMask) -> float:
    return auc(roc_curve(dmap, mask))


def quantile(sorted_values: np.ndarray, q: float) -> float:
    """Linear interpolation at rank ``q * (n - 1)`` of already sorted values."""
    pos = q * (len(sorted_values) - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(sorted_values) - 1)
    a, b = float(sorted_values[lo]), float(sorted_values[hi])
    return a + (pos - lo) * (b - a)


def _class_stats(values: np.ndarray) -> ClassStats:
    v = np.sort(values)
    return ClassStats(float(v[0]), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), float(v[-1]))


def separability_stats(dmap: DetectionMap, mask: GroundTruthMask) -> SeparabilityStats:
    scores, labels = _split(dmap, mask)
    return SeparabilityStats(_class_stats(scores[labels]), _class_stats(scores[~labels]))


def write_roc_csv(curve: RocCurve, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
            writer.writerow([repr(float(t)), repr(float(f)), repr(float(p))])


def write_stats_csv(stats: SeparabilityStats, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "min", "q1", "median", "q3", "max", "interval"])
        for name, cls in (("anomaly", stats.anomaly), ("background", stats.background)):
            writer.writerow([name, repr(cls.minimum), repr(cls.q1), repr(cls.median),
                             repr(cls.q3), repr(cls.maximum), repr(stats.interval)])
