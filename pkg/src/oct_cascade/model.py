"""Core domain types for volumetric OCT processing.

All types validate their invariants at construction and freeze their
payload arrays, so a value that exists is a value other code can trust.
Array axis order is (slice, depth, column) for 3D grids and
(slice, column) for transverse 2D grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, ValidationError

#: Retinal boundary surfaces in anatomical top-to-bottom order.
BOUNDARY_NAMES = ("ILM", "INL_LOWER", "RPE_UPPER", "BM")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _check_unit_range(data: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(data)
    bad |= (data < 0.0) | (data > 1.0)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValidationError(
            f"{what} value {data[idx]!r} at voxel {idx} outside [0, 1]"
        )


@dataclass(frozen=True)
class OctVolume:
    """A 3D OCT intensity grid in [0, 1] with optional voxel spacing.

    Parameters
    ----------
    data : ndarray, shape (n_slices, height, width)
        Intensities, stored as float32.
    spacing : tuple of float, optional
        Physical voxel spacing (dy, dz, dx) in micrometers. Informational.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValidationError(f"volume must be 3D, got ndim={data.ndim}")
        s, h, w = data.shape
        if s < 1 or h < 8 or w < 8:
            raise ValidationError(
                f"volume dims {data.shape} too small (need n_slices>=1, height>=8, width>=8)"
            )
        _check_unit_range(data, "intensity")
        object.__setattr__(self, "data", _freeze(data))
        if self.spacing is not None:
            object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))

    @classmethod
    def from_raw(cls, data: np.ndarray, spacing=None) -> "OctVolume":
        """Ingest raw scanner intensities, normalizing to [0, 1].

        Integer arrays are divided by their dtype's maximum so downstream
        thresholds are scale-free; float arrays must already be in [0, 1].
        """
        arr = np.asarray(data)
        if np.issubdtype(arr.dtype, np.integer):
            arr = arr.astype(np.float32) / np.iinfo(arr.dtype).max
        return cls(arr, spacing=spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BoundarySet:
    """Four named retinal boundary surfaces as fractional depths.

    Each surface is an (n_slices, width) float array giving the depth (in
    voxels, fractional allowed) of the boundary at every A-scan. The
    anatomical ordering ILM <= INL_LOWER <= RPE_UPPER <= BM must hold at
    every (slice, column).
    """

    surfaces: dict[str, np.ndarray]

    def __post_init__(self):
        if set(self.surfaces) != set(BOUNDARY_NAMES):
            missing = set(BOUNDARY_NAMES) - set(self.surfaces)
            extra = set(self.surfaces) - set(BOUNDARY_NAMES)
            raise ValidationError(
                f"boundary set needs exactly {BOUNDARY_NAMES}; "
                f"missing={sorted(missing)} extra={sorted(extra)}"
            )
        clean: dict[str, np.ndarray] = {}
        shape = None
        for name in BOUNDARY_NAMES:
            arr = np.asarray(self.surfaces[name], dtype=np.float64)
            if arr.ndim != 2:
                raise ValidationError(f"surface {name} must be 2D, got ndim={arr.ndim}")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ShapeMismatchError(
                    f"surface {name} shape {arr.shape} != {shape}"
                )
            if not np.isfinite(arr).all():
                raise ValidationError(f"surface {name} contains non-finite depths")
            if (arr < 0).any():
                raise ValidationError(f"surface {name} contains negative depths")
            clean[name] = _freeze(arr)
        for upper, lower in zip(BOUNDARY_NAMES[:-1], BOUNDARY_NAMES[1:]):
            viol = clean[upper] > clean[lower]
            if viol.any():
                s, x = (int(i) for i in np.argwhere(viol)[0])
                raise ValidationError(
                    f"boundary ordering violated at (slice={s}, column={x}): "
                    f"{upper}={clean[upper][s, x]} > {lower}={clean[lower][s, x]}"
                )
        object.__setattr__(self, "surfaces", clean)

    @property
    def shape(self) -> tuple[int, int]:
        return self.surfaces["ILM"].shape

    def __getitem__(self, name: str) -> np.ndarray:
        return self.surfaces[name]

    def check_against(self, dims: tuple[int, int, int]) -> None:
        """Validate this set against a volume's (n_slices, height, width)."""
        s, h, w = dims
        if self.shape != (s, w):
            raise ShapeMismatchError(
                f"boundary grid {self.shape} does not match volume transverse dims {(s, w)}"
            )
        bm = self.surfaces["BM"]
        if (bm > h - 1).any():
            sl, x = (int(i) for i in np.argwhere(bm > h - 1)[0])
            raise ValidationError(
                f"BM depth {bm[sl, x]} exceeds height-1={h - 1} at (slice={sl}, column={x})"
            )


@dataclass(frozen=True)
class EnFaceImage:
    """A 2D (n_slices, width) transverse projection image in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValidationError(f"en-face image must be 2D, got ndim={data.ndim}")
        _check_unit_range(data, "en-face intensity")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class PixelMask:
    """A 2D (n_slices, width) boolean transverse footprint."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValidationError(f"pixel mask must be 2D, got ndim={data.ndim}")
        object.__setattr__(self, "data", _freeze(data.astype(bool)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class VoxelMask:
    """A 3D boolean mask with OCT volume axis order."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValidationError(f"voxel mask must be 3D, got ndim={data.ndim}")
        object.__setattr__(self, "data", _freeze(data.astype(bool)))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class ProbabilityMap3D:
    """A 3D per-voxel score grid in [0, 1], float32."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValidationError(f"probability map must be 3D, got ndim={data.ndim}")
        _check_unit_range(data, "probability")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


def require_same_dims(a, b, what: str = "arrays") -> None:
    """Raise ShapeMismatchError unless the two values share grid dims."""
    da = a.dims if hasattr(a, "dims") else a.shape
    db = b.dims if hasattr(b, "dims") else b.shape
    if tuple(da) != tuple(db):
        raise ShapeMismatchError(f"{what}: {tuple(da)} != {tuple(db)}")
