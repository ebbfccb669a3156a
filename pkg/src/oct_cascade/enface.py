"""En-face RPE projection and vessel-shadow footprint segmentation (Part II).

Vessel shadows are attenuation trails on the brightest, avascular band of
the retina, so the mean intensity between the upper RPE boundary and
Bruch's membrane makes a high-contrast transverse map of vessel columns.
Shadows are segmented by normalized contrast against a local box-filtered
background, which tolerates the slow brightness drift across the field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ShapeMismatchError
from .fileio import read_volume
from .model import BoundarySet, EnFaceImage, OctVolume, PixelMask

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class ShadowConfig:
    """Shadow detector knobs.

    background_window is the (slices, columns) box size of the local
    background estimate; contrast_threshold is the minimum normalized
    darkening (B - e) / B that counts as shadow; components smaller than
    min_component_px are discarded; dilation_radius optionally grows the
    final mask by a Chebyshev square.
    """

    background_window: tuple[int, int] = (9, 15)
    contrast_threshold: float = 0.15
    min_component_px: int = 10
    dilation_radius: int = 0

    def __post_init__(self):
        ws, wx = self.background_window
        if ws < 3 or wx < 3 or ws % 2 == 0 or wx % 2 == 0:
            raise ConfigError(f"background_window {self.background_window} must be odd and >= 3")
        # Thresholds >= 1 are permitted and always yield an empty mask,
        # since normalized contrast is < 1 by construction.
        if self.contrast_threshold <= 0.0:
            raise ConfigError("contrast_threshold must be positive")
        if self.min_component_px < 1:
            raise ConfigError("min_component_px must be >= 1")
        if self.dilation_radius < 0:
            raise ConfigError("dilation_radius must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ShadowConfig":
        d = dict(d)
        if "background_window" in d:
            d["background_window"] = tuple(d["background_window"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown shadow config fields {sorted(unknown)}")
        return cls(**d)


def project_rpe(volume: OctVolume, boundaries: BoundarySet) -> EnFaceImage:
    """Mean intensity over the voxelized RPE band, per (slice, column).

    The band at (s, x) is ceil(RPE_UPPER) <= z <= floor(BM); where that is
    empty the single voxel at round(RPE_UPPER) is used instead.
    """
    boundaries.check_against(volume.dims)
    data = volume.data.astype(np.float64)
    n_slices, height, width = volume.dims

    z_lo = np.ceil(boundaries["RPE_UPPER"]).astype(np.int64)
    z_hi = np.floor(boundaries["BM"]).astype(np.int64)
    z_lo = np.clip(z_lo, 0, height - 1)
    z_hi = np.clip(z_hi, 0, height - 1)

    # Band mean via a depth prefix sum: sum over [lo, hi] = P[hi+1] - P[lo].
    prefix = np.concatenate(
        [np.zeros((n_slices, 1, width)), np.cumsum(data, axis=1)], axis=1
    )
    hi_take = np.take_along_axis(prefix, (z_hi + 1)[:, None, :], axis=1)[:, 0, :]
    lo_take = np.take_along_axis(prefix, z_lo[:, None, :], axis=1)[:, 0, :]
    count = z_hi - z_lo + 1

    empty = count < 1
    safe_count = np.where(empty, 1, count)
    band_mean = (hi_take - lo_take) / safe_count

    if empty.any():
        z_fb = np.clip(np.rint(boundaries["RPE_UPPER"]).astype(np.int64), 0, height - 1)
        fallback = np.take_along_axis(data, z_fb[:, None, :], axis=1)[:, 0, :]
        band_mean = np.where(empty, fallback, band_mean)

    return EnFaceImage(np.clip(band_mean, 0.0, 1.0))


def segment_shadows(
    image: EnFaceImage, cfg: ShadowConfig | None = None
) -> tuple[PixelMask, np.ndarray]:
    """Segment shadow footprints on an en-face image.

    Returns the binary footprint mask and the full normalized contrast map
    c = max(0, (B - e) / max(B, 1e-6)), which downstream scoring can use
    as a soft weight.
    """
    cfg = cfg or ShadowConfig()
    e = image.data.astype(np.float64)
    background = ndimage.uniform_filter(e, size=cfg.background_window, mode="nearest")
    contrast = np.maximum(0.0, (background - e) / np.maximum(background, 1e-6))

    mask = contrast > cfg.contrast_threshold
    if mask.any():
        labels, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
        sizes = np.bincount(labels.ravel())
        keep = sizes >= cfg.min_component_px
        keep[0] = False
        mask = keep[labels]
    if cfg.dilation_radius > 0 and mask.any():
        size = 2 * cfg.dilation_radius + 1
        mask = ndimage.binary_dilation(mask, structure=np.ones((size, size), dtype=bool))
    return PixelMask(mask), contrast


def import_shadow_mask(path: str, image: EnFaceImage | None = None) -> PixelMask:
    """Load an externally produced footprint mask, validating shape if the
    generating en-face image is supplied."""
    value = read_volume(path)
    if not isinstance(value, PixelMask):
        raise ConfigError(f"{path!r} does not contain a 2D mask")
    if image is not None and value.shape != image.shape:
        raise ShapeMismatchError(
            f"shadow mask shape {value.shape} != en-face shape {image.shape}"
        )
    return value
