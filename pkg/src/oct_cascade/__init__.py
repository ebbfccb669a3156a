"""Anatomy-guided 3D retinal vessel extraction from volumetric OCT."""

from .model import (
    BOUNDARY_NAMES,
    BoundarySet,
    EnFaceImage,
    OctVolume,
    PixelMask,
    ProbabilityMap3D,
    VoxelMask,
)
from .phantom import PhantomConfig, PhantomGroundTruth, default_config, generate
from .layers import DpConfig, import_boundaries, segment_boundaries, trace_boundary
from .enface import ShadowConfig, import_shadow_mask, project_rpe, segment_shadows
from .cascade import (
    CascadeResult,
    InfusionConfig,
    VesselBackendConfig,
    binarize_and_label,
    infuse,
    longitudinal_mask,
    run_cascade,
    transverse_mask,
    vessel_probability,
)
from .metrics import (
    ConfusionCounts,
    MetricsReport,
    ScheduleParams,
    acc,
    auc,
    build_report,
    confusion,
    iou,
    poly_lr,
    sen,
)
from .fileio import read_boundaries, read_volume, write_boundaries, write_pgm, write_volume

__version__ = "0.1.0"

__all__ = [
    "BOUNDARY_NAMES",
    "BoundarySet",
    "CascadeResult",
    "ConfusionCounts",
    "DpConfig",
    "EnFaceImage",
    "InfusionConfig",
    "MetricsReport",
    "OctVolume",
    "PhantomConfig",
    "PhantomGroundTruth",
    "PixelMask",
    "ProbabilityMap3D",
    "ScheduleParams",
    "ShadowConfig",
    "VesselBackendConfig",
    "VoxelMask",
    "acc",
    "auc",
    "binarize_and_label",
    "build_report",
    "confusion",
    "default_config",
    "generate",
    "import_boundaries",
    "import_shadow_mask",
    "infuse",
    "iou",
    "longitudinal_mask",
    "poly_lr",
    "project_rpe",
    "read_boundaries",
    "read_volume",
    "run_cascade",
    "segment_boundaries",
    "segment_shadows",
    "sen",
    "trace_boundary",
    "transverse_mask",
    "vessel_probability",
    "write_boundaries",
    "write_pgm",
    "write_volume",
]
