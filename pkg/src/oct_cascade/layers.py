"""Retinal layer boundary tracing by per-B-scan dynamic programming.

Each B-scan is handled independently: a cost image is built from the
intensity or its vertical gradient, and the minimum-cost left-to-right
path through a per-column search band gives one boundary. The four
boundaries are traced sequentially (ILM, then RPE upper, then BM, then
INL lower), each band positioned relative to the boundaries already
found, which guarantees the anatomical ordering by construction.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeMismatchError, ValidationError
from .fileio import read_boundaries
from .kernels import dp_trace
from .model import BoundarySet, OctVolume

COST_KINDS = ("negative_vertical_gradient", "positive_vertical_gradient", "negative_intensity")


@dataclass(frozen=True)
class DpConfig:
    """Knobs of the dynamic-programming tracer.

    smoothness is the cost per voxel of inter-column depth change and
    max_jump caps that change. Band fields position the per-boundary
    search windows relative to the boundaries already traced; offsets are
    fractions of the volume height so the same config works at any
    axial resolution. `ilm_band` is (min row, fraction of height).
    """

    smoothness: float = 0.5
    max_jump: int = 2
    ilm_band: tuple[int, float] = (2, 0.45)
    rpe_band: tuple[float, int] = (0.06, 6)      # [ILM + frac*H, H - rows]
    bm_band: tuple[float, float] = (0.005, 0.13)  # [RPE + frac*H, RPE + frac*H]
    inl_band: tuple[float, float] = (0.015, 0.045)  # [ILM + frac*H, RPE - frac*H]
    cost_kinds: tuple[str, str, str, str] = (
        "negative_vertical_gradient",  # ILM: dark above, bright below
        "positive_vertical_gradient",  # INL lower: bright above, dark below
        "negative_intensity",          # RPE upper: ride the brightest band
        "positive_vertical_gradient",  # BM: bright above, dark below
    )

    def __post_init__(self):
        if self.smoothness < 0:
            raise ConfigError("smoothness must be >= 0")
        if self.max_jump < 1:
            raise ConfigError("max_jump must be >= 1")
        for kind in self.cost_kinds:
            if kind not in COST_KINDS:
                raise ConfigError(f"unknown cost kind {kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "DpConfig":
        d = dict(d)
        for key in ("ilm_band", "rpe_band", "bm_band", "inl_band", "cost_kinds"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown DP config fields {sorted(unknown)}")
        return cls(**d)


def trace_boundary(cost, band_lo, band_hi, smoothness=0.5, max_jump=2):
    """Trace the minimum-cost depth path across a (height, width) cost image.

    Parameters
    ----------
    cost : ndarray (height, width)
    band_lo, band_hi : int or ndarray (width,)
        Inclusive per-column depth band. Must be non-empty and inside the
        image.
    smoothness : float
        Penalty per voxel of depth change between adjacent columns.
    max_jump : int
        Maximum allowed |z(x+1) - z(x)|.

    Returns
    -------
    ndarray (width,) of int64 depths. Among equal-cost paths the
    lexicographically smallest (shallower depths, leftmost column first)
    is returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ShapeMismatchError(f"cost must be 2D, got ndim={cost.ndim}")
    if not np.isfinite(cost).all():
        raise ValidationError("cost image contains non-finite values")
    height, width = cost.shape
    lo = np.broadcast_to(np.asarray(band_lo, dtype=np.int64), (width,)).copy()
    hi = np.broadcast_to(np.asarray(band_hi, dtype=np.int64), (width,)).copy()
    if (lo > hi).any():
        x = int(np.argwhere(lo > hi)[0, 0])
        raise ConfigError(f"empty search band at column {x}: [{lo[x]}, {hi[x]}]")
    if (lo < 0).any() or (hi >= height).any():
        raise ConfigError("search band outside [0, height)")
    return dp_trace(cost, lo, hi, smoothness, max_jump)


def _cost_image(bscan: np.ndarray, kind: str) -> np.ndarray:
    if kind == "negative_intensity":
        return -bscan
    grad = np.gradient(bscan, axis=0)  # central differences, one-sided at the rows
    return -grad if kind == "negative_vertical_gradient" else grad


def _rows(frac: float, height: int, floor: int = 1) -> int:
    return max(floor, int(round(frac * height)))


def _segment_slice(bscan: np.ndarray, cfg: DpConfig):
    height, width = bscan.shape
    lam, jump = cfg.smoothness, cfg.max_jump
    k_ilm, k_inl, k_rpe, k_bm = cfg.cost_kinds

    ilm_lo, ilm_frac = cfg.ilm_band
    ilm = trace_boundary(
        _cost_image(bscan, k_ilm), ilm_lo, int(ilm_frac * height), lam, jump
    )

    rpe_hi = height - cfg.rpe_band[1]
    rpe_lo = np.minimum(ilm + _rows(cfg.rpe_band[0], height, 4), rpe_hi - 1)
    rpe = trace_boundary(_cost_image(bscan, k_rpe), rpe_lo, rpe_hi, lam, jump)
    rpe = np.maximum(rpe, ilm)

    bm_lo = np.minimum(rpe + _rows(cfg.bm_band[0], height), height - 2)
    bm_hi = np.minimum(rpe + _rows(cfg.bm_band[1], height, 2), height - 2)
    bm = trace_boundary(_cost_image(bscan, k_bm), bm_lo, np.maximum(bm_hi, bm_lo), lam, jump)
    bm = np.maximum(bm, rpe)

    inl_lo = ilm + _rows(cfg.inl_band[0], height, 2)
    inl_hi = np.maximum(rpe - _rows(cfg.inl_band[1], height, 4), inl_lo)
    inl_lo = np.minimum(inl_lo, height - 1)
    inl_hi = np.minimum(inl_hi, height - 1)
    inl = trace_boundary(_cost_image(bscan, k_inl), inl_lo, inl_hi, lam, jump)
    inl = np.clip(inl, ilm, rpe)

    return ilm, inl, rpe, bm


def _thread_count() -> int:
    env = os.environ.get("OCT_CASCADE_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"OCT_CASCADE_THREADS={env!r} is not an integer") from None
    return min(4, os.cpu_count() or 1)


def segment_boundaries(volume: OctVolume, cfg: DpConfig | None = None) -> BoundarySet:
    """Trace all four boundaries on every slice of a volume.

    Slices are independent; they are mapped over a small thread pool
    (capped by OCT_CASCADE_THREADS) and written back by index, so the
    result does not depend on scheduling.
    """
    cfg = cfg or DpConfig()
    data = volume.data.astype(np.float64)
    n_slices, _, width = volume.dims
    out = {name: np.zeros((n_slices, width)) for name in ("ILM", "INL_LOWER", "RPE_UPPER", "BM")}

    def run(s: int) -> None:
        ilm, inl, rpe, bm = _segment_slice(data[s], cfg)
        out["ILM"][s] = ilm
        out["INL_LOWER"][s] = inl
        out["RPE_UPPER"][s] = rpe
        out["BM"][s] = bm

    threads = _thread_count()
    if threads > 1 and n_slices > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n_slices)))
    else:
        for s in range(n_slices):
            run(s)
    return BoundarySet(out)


def import_boundaries(path: str, volume: OctVolume | None = None) -> BoundarySet:
    """Load an externally produced boundary CSV (e.g. a trained network's
    output) and validate it, optionally against a target volume."""
    b = read_boundaries(path)
    if volume is not None:
        b.check_against(volume.dims)
    return b
