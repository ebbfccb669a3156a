"""Seeded synthetic OCT volumes with known anatomy and vessel ground truth.

The phantom stacks five layers (vitreous, inner retina, middle retina, RPE
band, choroid) between four smoothly undulating boundary surfaces, routes
bright vessel tubes through the ILM-INL band, casts attenuation shadows
below each tube, and finishes with clamped Gaussian speckle. Every draw
comes from a counter-based Philox stream keyed by (seed, stage), so output
is a pure function of the config and adding vessels never moves the
surfaces.

Default intensity levels are calibrated against the classical cascade:
the RPE band is the brightest structure (so it dominates an unmasked
intensity backend), vessels sit well above the inner retina, and the inner
retina sits close enough to the binarization threshold that default
speckle produces transversely spread false positives - the failure mode
the two anatomical masks exist to remove.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels
from .errors import ConfigError
from .model import BoundarySet, OctVolume, PixelMask, VoxelMask

_STREAM_SURFACES = 0
_STREAM_VESSELS = 1
_STREAM_NOISE = 2

#: (name, default level) in anatomical top-to-bottom order.
DEFAULT_LAYER_LEVELS = {
    "vitreous": 0.05,
    "inner_retina": 0.475,
    "middle_retina": 0.10,
    "rpe": 0.95,
    "choroid": 0.30,
}

# Boundary surface placement as fractions of volume height.
_ILM_FRAC = 0.22
_INL_FRAC = 0.40
_RPE_FRAC = 0.70
_BM_OFFSET_FRAC = 0.065

# The RPE band renders as a one-voxel bright cap at its configured level
# over a dimmer tail. A flat-bright slab has no depth structure, so a
# maximum-intensity tracer could not pin its upper boundary; the cap is
# what the tracer locks onto.
_RPE_CAP_VOXELS = 1.0
_RPE_TAIL_FACTOR = 0.85


@dataclass(frozen=True)
class PhantomConfig:
    """Parameters of one synthetic volume. Equal configs generate equal bytes."""

    dims: tuple[int, int, int] = (32, 192, 160)
    n_vessels: int = 4
    vessel_radius: float = 2.0
    vessel_depth_fraction_range: tuple[float, float] = (0.25, 0.75)
    shadow_attenuation: float = 0.4
    noise_sigma: float = 0.03
    layer_levels: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_LAYER_LEVELS)
    )
    vessel_level: float = 0.7
    seed: int = 0

    def __post_init__(self):
        n_slices, height, width = self.dims
        if n_slices < 1 or height < 16 or width < 16:
            raise ConfigError(f"phantom dims {self.dims} too small")
        if self.n_vessels < 0:
            raise ConfigError("n_vessels must be non-negative")
        if self.vessel_radius < 0.5:
            raise ConfigError("vessel_radius must be >= 0.5 voxels")
        lo, hi = self.vessel_depth_fraction_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigError(
                f"vessel_depth_fraction_range {self.vessel_depth_fraction_range} "
                "must satisfy 0 <= lo <= hi <= 1"
            )
        if not (0.0 < self.shadow_attenuation <= 1.0):
            raise ConfigError("shadow_attenuation must be in (0, 1]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if set(self.layer_levels) != set(DEFAULT_LAYER_LEVELS):
            raise ConfigError(
                f"layer_levels must name exactly {sorted(DEFAULT_LAYER_LEVELS)}"
            )
        for name, level in self.layer_levels.items():
            if not (0.0 <= level <= 1.0):
                raise ConfigError(f"layer level {name}={level} outside [0, 1]")
        rpe = self.layer_levels["rpe"]
        others = [v for k, v in self.layer_levels.items() if k != "rpe"]
        if not all(rpe > v for v in others):
            raise ConfigError("the RPE band must be the strictly brightest layer")
        if not (0.0 <= self.vessel_level <= 1.0):
            raise ConfigError("vessel_level must be in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["vessel_depth_fraction_range"] = list(self.vessel_depth_fraction_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomConfig":
        d = dict(d)
        if "dims" in d:
            d["dims"] = tuple(int(v) for v in d["dims"])
        if "vessel_depth_fraction_range" in d:
            d["vessel_depth_fraction_range"] = tuple(
                float(v) for v in d["vessel_depth_fraction_range"]
            )
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown phantom config fields {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class PhantomGroundTruth:
    """Oracle emitted next to each phantom volume."""

    boundaries: BoundarySet
    vessel_mask: VoxelMask
    shadow_footprint: PixelMask
    #: per-vessel (n_slices, 2) arrays of (depth, column) axis samples
    centerlines: tuple[np.ndarray, ...]


def default_config(scale: str, n_slices: int | None = None, seed: int = 0) -> PhantomConfig:
    """Configs for the two supported working scales.

    `desk` is small enough for tests and iteration; `paper` matches the
    B-scan raster of a common clinical acquisition (496 deep, 384 wide)
    with a configurable slice count.
    """
    if scale == "desk":
        return PhantomConfig(dims=(n_slices or 32, 192, 160), seed=seed)
    if scale == "paper":
        return PhantomConfig(
            dims=(n_slices or 19, 496, 384),
            n_vessels=6,
            vessel_radius=2.5,
            seed=seed,
        )
    raise ConfigError(f"unknown phantom scale {scale!r} (expected 'desk' or 'paper')")


def _stream(seed: int, stage: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stage)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _undulation(rng, n_slices, width, amplitude, n_waves=2):
    """Smooth seeded surface wobble: a sum of separable random sinusoids."""
    s = np.arange(n_slices)[:, None]
    x = np.arange(width)[None, :]
    out = np.zeros((n_slices, width))
    for _ in range(n_waves):
        amp = amplitude * rng.uniform(0.5, 1.0)
        fs = rng.uniform(0.5, 1.5)
        fx = rng.uniform(0.5, 1.5)
        ps = rng.uniform(0.0, 2.0 * np.pi)
        px = rng.uniform(0.0, 2.0 * np.pi)
        out = out + amp * np.sin(2.0 * np.pi * fs * s / max(n_slices, 2) + ps) * np.sin(
            2.0 * np.pi * fx * x / width + px
        )
    return out


def _surfaces(cfg: PhantomConfig) -> BoundarySet:
    n_slices, height, width = cfg.dims
    rng = _stream(cfg.seed, _STREAM_SURFACES)
    common = _undulation(rng, n_slices, width, amplitude=0.013 * height)
    bases = {
        "ILM": _ILM_FRAC * height,
        "INL_LOWER": _INL_FRAC * height,
        "RPE_UPPER": _RPE_FRAC * height,
        "BM": (_RPE_FRAC + _BM_OFFSET_FRAC) * height,
    }
    surfaces = {}
    for name, base in bases.items():
        own = _undulation(rng, n_slices, width, amplitude=0.004 * height)
        surfaces[name] = np.clip(base + common + own, 1.0, height - 2.0)
    # The margins between bases dwarf the per-surface wobble, but enforce
    # ordering anyway so the invariant is structural.
    surfaces["INL_LOWER"] = np.maximum(surfaces["INL_LOWER"], surfaces["ILM"])
    surfaces["RPE_UPPER"] = np.maximum(surfaces["RPE_UPPER"], surfaces["INL_LOWER"])
    surfaces["BM"] = np.maximum(surfaces["BM"], surfaces["RPE_UPPER"])
    return BoundarySet(surfaces)


def _layer_cake(cfg: PhantomConfig, b: BoundarySet) -> np.ndarray:
    _, height, _ = cfg.dims
    z = np.arange(height, dtype=np.float64)[None, :, None]
    ilm = b["ILM"][:, None, :]
    inl = b["INL_LOWER"][:, None, :]
    rpe = b["RPE_UPPER"][:, None, :]
    bm = b["BM"][:, None, :]
    layer_index = (
        (z >= ilm).astype(np.int8)
        + (z >= inl).astype(np.int8)
        + (z >= rpe).astype(np.int8)
        + (z > bm).astype(np.int8)
    )
    levels = np.array(
        [
            cfg.layer_levels["vitreous"],
            cfg.layer_levels["inner_retina"],
            cfg.layer_levels["middle_retina"],
            cfg.layer_levels["rpe"],
            cfg.layer_levels["choroid"],
        ],
        dtype=np.float64,
    )
    data = levels[layer_index]
    rpe_tail = (layer_index == 3) & (z >= rpe + _RPE_CAP_VOXELS)
    data[rpe_tail] = cfg.layer_levels["rpe"] * _RPE_TAIL_FACTOR
    return data


def _vessel_paths(cfg: PhantomConfig, b: BoundarySet):
    """Per-vessel axis samples (zc, xc), each (n_vessels, n_slices)."""
    n_slices, height, width = cfg.dims
    n = cfg.n_vessels
    zc = np.zeros((n, n_slices))
    xc = np.zeros((n, n_slices))
    if n == 0:
        return zc, xc
    rng = _stream(cfg.seed, _STREAM_VESSELS)
    lo, hi = cfg.vessel_depth_fraction_range
    r = cfg.vessel_radius
    band = b["INL_LOWER"] - b["ILM"]
    t_min = float(band.min())
    if min(lo, 1.0 - hi) * t_min < r:
        raise ConfigError(
            f"ILM-INL band (min thickness {t_min:.1f} voxels) too thin to host a "
            f"vessel of radius {r} at depth fractions in [{lo}, {hi}]"
        )
    s_axis = np.arange(n_slices)
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    for v in range(n):
        # Draw order is fixed per vessel and the base column comes from a
        # golden-ratio sequence, so adding vessels extends the stream
        # without disturbing earlier tubes.
        frac = rng.uniform(lo, hi)
        x0 = width * (((v + 1) * golden) % 1.0) + rng.uniform(-4.0, 4.0)
        amp = rng.uniform(1.5, 3.5)
        fs = rng.uniform(0.4, 1.2)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        x_path = x0 + amp * np.sin(2.0 * np.pi * fs * s_axis / max(n_slices, 2) + ph)
        x_path = np.clip(x_path, r + 1.0, width - r - 2.0)
        xi = np.clip(np.rint(x_path).astype(np.int64), 0, width - 1)
        z_path = b["ILM"][s_axis, xi] + frac * band[s_axis, xi]
        zc[v] = z_path
        xc[v] = x_path
    return zc, xc


def generate(cfg: PhantomConfig) -> tuple[OctVolume, PhantomGroundTruth]:
    """Generate one phantom volume and its ground truth.

    Deterministic in `cfg` (including the seed): two calls produce
    byte-identical volumes and masks.
    """
    n_slices, height, width = cfg.dims
    boundaries = _surfaces(cfg)
    data = _layer_cake(cfg, boundaries)
    vmask = np.zeros(cfg.dims, dtype=bool)

    zc, xc = _vessel_paths(cfg, boundaries)
    kernels.raster_tubes(data, vmask, zc, xc, cfg.vessel_radius, cfg.vessel_level)
    kernels.apply_shadows(data, vmask, zc, xc, cfg.vessel_radius, cfg.shadow_attenuation)

    if cfg.noise_sigma > 0:
        noise_rng = _stream(cfg.seed, _STREAM_NOISE)
        data = data + noise_rng.normal(0.0, cfg.noise_sigma, size=cfg.dims)
    np.clip(data, 0.0, 1.0, out=data)

    volume = OctVolume(data.astype(np.float32))
    footprint = PixelMask(vmask.any(axis=1))
    centerlines = []
    for v in range(cfg.n_vessels):
        line = np.stack([zc[v], xc[v]], axis=1)
        line.flags.writeable = False
        centerlines.append(line)
    centerlines = tuple(centerlines)
    return volume, PhantomGroundTruth(
        boundaries=boundaries,
        vessel_mask=VoxelMask(vmask),
        shadow_footprint=footprint,
        centerlines=centerlines,
    )
