"""Spectral-spatial fusion anomaly detection for hyperspectral images."""

__version__ = "0.1.0"

from .core import (
    DetectionMap,
    GroundTruthMask,
    HyperCube,
    PixelCoord,
    load_cube,
    load_map,
    load_mask,
    minmax_normalize,
    pad_symmetric,
    save_cube,
    save_map,
    save_mask,
)
from .windowing import DualWindowSpec, extract_dual_window, idw_weights
from .spectral import SpectralParams, spectral_map
from .spatial import SpatialParams, spatial_map
from .fusion import FusionWeights, adaptive_weights, fuse, fuse_adaptive, fuse_average, spectral_norm
from .baselines import grx_map, lrx_map
from .evaluation import auc, roc_auc, roc_curve, separability_stats
from .synth import SceneSpec, canonical_scene_spec, generate_scene
