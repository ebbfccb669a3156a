"""Mask construction, vessel scoring, infusion, and 3D component extraction.

Two anatomical priors restrict where vessels may be claimed:

* the longitudinal mask keeps only depths between the ILM and the lower
  INL boundary, where retinal vessels actually live;
* the transverse mask keeps only (slice, column) positions whose RPE
  shadow betrays a vessel overhead, extruded along depth.

Either mask multiplies a per-voxel probability map produced by a pluggable
backend - the built-in classical scorer, or any externally trained model
whose output is imported through the float32 grid container - after which
the map is thresholded and cleaned by connected-component size.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .enface import ShadowConfig, project_rpe, segment_shadows
from .errors import ConfigError, ShapeMismatchError
from .fileio import read_volume
from .layers import DpConfig, segment_boundaries
from .model import (
    BoundarySet,
    EnFaceImage,
    OctVolume,
    PixelMask,
    ProbabilityMap3D,
    VoxelMask,
    require_same_dims,
)


@dataclass(frozen=True)
class InfusionConfig:
    """Which priors to apply and how the final mask is extracted."""

    use_longitudinal: bool = True
    use_transverse: bool = True
    transverse_dilation: int = 1
    binarize_threshold: float = 0.5
    min_component_vox: int = 8
    connectivity: int = 26

    def __post_init__(self):
        if not (0.0 < self.binarize_threshold < 1.0):
            raise ConfigError("binarize_threshold must be in (0, 1)")
        if self.transverse_dilation < 0:
            raise ConfigError("transverse_dilation must be >= 0")
        if self.min_component_vox < 1:
            raise ConfigError("min_component_vox must be >= 1")
        if self.connectivity not in (6, 26):
            raise ConfigError("connectivity must be 6 or 26")

    @classmethod
    def from_dict(cls, d: dict) -> "InfusionConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown infusion config fields {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class VesselBackendConfig:
    """Source of the per-voxel vessel probability map.

    kind='classical' scores voxels as w_intensity * normalized intensity
    plus w_shadow * normalized shadow contrast of the column. The default
    weights lean entirely on intensity: the shadow evidence enters the
    cascade as the transverse mask, and double-counting it in the score
    floods the vessel band under the shadow columns.

    kind='import' reads a ProbabilityMap3D container from import_path,
    which is how externally trained networks plug in.
    """

    kind: str = "classical"
    import_path: str | None = None
    w_intensity: float = 1.0
    w_shadow: float = 0.0

    def __post_init__(self):
        if self.kind not in ("classical", "import"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "import" and not self.import_path:
            raise ConfigError("import backend requires import_path")
        if self.w_intensity < 0 or self.w_shadow < 0:
            raise ConfigError("backend weights must be non-negative")
        if abs(self.w_intensity + self.w_shadow - 1.0) > 1e-9:
            raise ConfigError("backend weights must sum to 1")

    @classmethod
    def from_dict(cls, d: dict) -> "VesselBackendConfig":
        d = dict(d)
        if "path" in d:  # alias matching the other import sections
            d["import_path"] = d.pop("path")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown backend config fields {sorted(unknown)}")
        return cls(**d)


def longitudinal_mask(boundaries: BoundarySet, dims: tuple[int, int, int]) -> VoxelMask:
    """Voxels with ceil(ILM) <= z <= floor(INL_LOWER) at their column."""
    boundaries.check_against(dims)
    _, height, _ = dims
    z = np.arange(height)[None, :, None]
    lo = np.ceil(boundaries["ILM"])[:, None, :]
    hi = np.floor(boundaries["INL_LOWER"])[:, None, :]
    return VoxelMask((z >= lo) & (z <= hi))


def transverse_mask(footprint: PixelMask, dims: tuple[int, int, int], dilation: int = 0) -> VoxelMask:
    """Footprint dilated by a (2d+1)^2 square, extruded along depth."""
    n_slices, height, width = dims
    if footprint.shape != (n_slices, width):
        raise ShapeMismatchError(
            f"footprint shape {footprint.shape} != volume transverse dims {(n_slices, width)}"
        )
    fp = footprint.data
    if dilation > 0 and fp.any():
        size = 2 * dilation + 1
        fp = ndimage.binary_dilation(fp, structure=np.ones((size, size), dtype=bool))
    return VoxelMask(np.broadcast_to(fp[:, None, :], dims))


def vessel_probability(
    volume: OctVolume,
    boundaries: BoundarySet,
    shadow_contrast: np.ndarray | None = None,
    cfg: VesselBackendConfig | None = None,
) -> ProbabilityMap3D:
    """Per-voxel vessel score in [0, 1].

    Classical backend: intensity is min-max normalized using the value
    range inside the ILM-BM band (vitreous and choroid stay out of the
    normalization), the column shadow contrast is min-max normalized, and
    the two are blended by the configured weights. A constant band (no
    contrast at all) yields an all-zero map and a warning.
    """
    cfg = cfg or VesselBackendConfig()
    if cfg.kind == "import":
        value = read_volume(cfg.import_path)
        if not isinstance(value, ProbabilityMap3D):
            raise ConfigError(f"{cfg.import_path!r} does not contain a probability map")
        require_same_dims(value, volume, "imported probability map vs volume")
        return value

    boundaries.check_against(volume.dims)
    data = volume.data.astype(np.float64)
    _, height, _ = volume.dims
    z = np.arange(height)[None, :, None]
    band = (z >= np.ceil(boundaries["ILM"])[:, None, :]) & (
        z <= np.floor(boundaries["BM"])[:, None, :]
    )
    if not band.any():
        band = np.ones_like(band)
    band_vals = data[band]
    vmin = float(band_vals.min())
    vmax = float(band_vals.max())
    if vmax - vmin < 1e-9:
        warnings.warn(
            "degenerate intensity normalization (constant ILM-BM band); "
            "returning an all-zero probability map",
            RuntimeWarning,
            stacklevel=2,
        )
        return ProbabilityMap3D(np.zeros(volume.dims, dtype=np.float32))
    intensity = np.clip((data - vmin) / (vmax - vmin), 0.0, 1.0)

    score = cfg.w_intensity * intensity
    if cfg.w_shadow > 0.0:
        if shadow_contrast is None:
            raise ConfigError("w_shadow > 0 requires a shadow_contrast map")
        c = np.asarray(shadow_contrast, dtype=np.float64)
        if c.shape != (volume.n_slices, volume.width):
            raise ShapeMismatchError(
                f"shadow contrast shape {c.shape} != {(volume.n_slices, volume.width)}"
            )
        cmin, cmax = float(c.min()), float(c.max())
        c_norm = np.zeros_like(c) if cmax - cmin < 1e-9 else (c - cmin) / (cmax - cmin)
        score = score + cfg.w_shadow * c_norm[:, None, :]

    return ProbabilityMap3D(np.clip(score, 0.0, 1.0).astype(np.float32))


def infuse(
    p: ProbabilityMap3D,
    longitudinal: VoxelMask | None = None,
    transverse: VoxelMask | None = None,
) -> ProbabilityMap3D:
    """Pointwise-multiply the map by every provided mask's indicator.

    Absent masks are the identity, so infusion is idempotent for fixed
    masks and never increases any voxel's score.
    """
    out = p.data
    for mask in (longitudinal, transverse):
        if mask is not None:
            require_same_dims(p, mask, "probability map vs mask")
            out = out * mask.data
    return ProbabilityMap3D(out)


def binarize_and_label(p: ProbabilityMap3D, cfg: InfusionConfig) -> tuple[VoxelMask, int]:
    """Threshold at cfg.binarize_threshold, drop small components, count.

    Components are labeled in raster-scan order (ordered by their minimum
    linear voxel index), so the surviving count and mask are deterministic.
    """
    binary = p.data > cfg.binarize_threshold
    if not binary.any():
        return VoxelMask(binary), 0
    structure = (
        np.ones((3, 3, 3), dtype=bool)
        if cfg.connectivity == 26
        else ndimage.generate_binary_structure(3, 1)
    )
    labels, n = ndimage.label(binary, structure=structure)
    sizes = np.bincount(labels.ravel())
    keep = sizes >= cfg.min_component_vox
    keep[0] = False
    return VoxelMask(keep[labels]), int(keep.sum())


@dataclass(frozen=True)
class CascadeResult:
    """Final mask plus every intermediate a report might need."""

    mask: VoxelMask
    probability: ProbabilityMap3D
    boundaries: BoundarySet
    enface: EnFaceImage
    shadow_mask: PixelMask
    shadow_contrast: np.ndarray
    raw_probability: ProbabilityMap3D
    component_count: int


def run_cascade(
    volume: OctVolume,
    boundaries: BoundarySet | None = None,
    shadow_source: PixelMask | None = None,
    backend_cfg: VesselBackendConfig | None = None,
    infusion_cfg: InfusionConfig | None = None,
    dp_cfg: DpConfig | None = None,
    shadow_cfg: ShadowConfig | None = None,
) -> CascadeResult:
    """Execute the full three-part pipeline on one volume.

    Boundary and shadow sources default to the classical stages; pass
    pre-computed values (e.g. network outputs loaded from disk) to replace
    either. The infusion flags decide which priors multiply the
    probability map before binarization.
    """
    infusion_cfg = infusion_cfg or InfusionConfig()
    backend_cfg = backend_cfg or VesselBackendConfig()

    if boundaries is None:
        boundaries = segment_boundaries(volume, dp_cfg)
    else:
        boundaries.check_against(volume.dims)

    image = project_rpe(volume, boundaries)
    if shadow_source is None:
        shadow_mask, contrast = segment_shadows(image, shadow_cfg)
    else:
        if shadow_source.shape != image.shape:
            raise ShapeMismatchError(
                f"shadow mask shape {shadow_source.shape} != en-face shape {image.shape}"
            )
        shadow_mask = shadow_source
        _, contrast = segment_shadows(image, shadow_cfg)

    raw = vessel_probability(volume, boundaries, contrast, backend_cfg)

    lm = longitudinal_mask(boundaries, volume.dims) if infusion_cfg.use_longitudinal else None
    tm = (
        transverse_mask(shadow_mask, volume.dims, infusion_cfg.transverse_dilation)
        if infusion_cfg.use_transverse
        else None
    )
    infused = infuse(raw, lm, tm)
    mask, n_components = binarize_and_label(infused, infusion_cfg)

    return CascadeResult(
        mask=mask,
        probability=infused,
        boundaries=boundaries,
        enface=image,
        shadow_mask=shadow_mask,
        shadow_contrast=contrast,
        raw_probability=raw,
        component_count=n_components,
    )
