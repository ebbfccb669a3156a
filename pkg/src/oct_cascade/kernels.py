"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

Set OCT_CASCADE_NO_NUMBA=1 to force the numpy fallbacks (also used
automatically when numba is not importable). Both paths perform the same
floating point operations in the same order, so results are bit-identical
and the flag only changes speed. `benchmarks/bench_kernels.py` compares
the two.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import InfeasibleBandError


def _env_disabled() -> bool:
    return os.environ.get("OCT_CASCADE_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


USING_NUMBA = False
if not _env_disabled():
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USING_NUMBA = False


# ---------------------------------------------------------------------------
# Minimum-cost boundary path (dynamic programming over columns)
# ---------------------------------------------------------------------------

def _dp_suffix_numpy(cost, lo, hi, lam, max_jump):
    """Suffix cost table D[x, z] = best cost of covering columns x..W-1
    with the path at depth z in column x. Infeasible states are +inf."""
    height, width = cost.shape
    z = np.arange(height)
    table = np.full((width, height), np.inf)
    last = np.full(height, np.inf)
    sel = (z >= lo[width - 1]) & (z <= hi[width - 1])
    last[sel] = cost[sel, width - 1]
    table[width - 1] = last
    for x in range(width - 2, -1, -1):
        nxt = table[x + 1]
        best = np.full(height, np.inf)
        # Candidates scanned in ascending target depth keeps the strict "<"
        # comparison tie-broken toward the smallest depth.
        for k in range(-max_jump, max_jump + 1):
            cand = np.full(height, np.inf)
            zp = z + k
            ok = (zp >= 0) & (zp < height)
            cand[ok] = nxt[zp[ok]] + lam * abs(k)
            take = cand < best
            best[take] = cand[take]
        col = np.full(height, np.inf)
        sel = (z >= lo[x]) & (z <= hi[x]) & np.isfinite(best)
        col[sel] = cost[sel, x] + best[sel]
        table[x] = col
        if not np.isfinite(col).any():
            return table, x
    if not np.isfinite(table[0]).any():
        return table, 0
    return table, -1


if USING_NUMBA:

    @njit(cache=True, nogil=True)
    def _dp_suffix_numba(cost, lo, hi, lam, max_jump):  # pragma: no cover - jit
        height, width = cost.shape
        table = np.full((width, height), np.inf)
        for z in range(lo[width - 1], hi[width - 1] + 1):
            table[width - 1, z] = cost[z, width - 1]
        for x in range(width - 2, -1, -1):
            any_ok = False
            for z in range(lo[x], hi[x] + 1):
                best = np.inf
                for k in range(-max_jump, max_jump + 1):
                    zp = z + k
                    if 0 <= zp < height:
                        c = table[x + 1, zp] + lam * abs(k)
                        if c < best:
                            best = c
                if best < np.inf:
                    table[x, z] = cost[z, x] + best
                    any_ok = True
            if not any_ok:
                return table, x
        ok0 = False
        for z in range(lo[0], hi[0] + 1):
            if table[0, z] < np.inf:
                ok0 = True
                break
        if not ok0:
            return table, 0
        return table, -1


def _reconstruct(table, lo, hi, lam, max_jump):
    """Greedy left-to-right walk of the suffix table. Ties resolve to the
    smallest depth, column by column from the left, so the returned path is
    the lexicographically smallest of the optimal ones."""
    width, height = table.shape
    first = table[0]
    z = int(lo[0])
    best = np.inf
    for cand in range(int(lo[0]), int(hi[0]) + 1):
        if first[cand] < best:
            best = first[cand]
            z = cand
    path = np.empty(width, dtype=np.int64)
    path[0] = z
    for x in range(width - 1):
        nxt = table[x + 1]
        best = np.inf
        nz = z
        for k in range(-max_jump, max_jump + 1):
            zp = z + k
            if 0 <= zp < height:
                c = lam * abs(k) + nxt[zp]
                if c < best:
                    best = c
                    nz = zp
        z = nz
        path[x + 1] = z
    return path


def dp_trace(cost, band_lo, band_hi, lam, max_jump):
    """Minimum-cost depth path through a (height, width) cost image.

    Minimizes sum_x cost[z(x), x] + lam * sum_x |z(x+1) - z(x)| subject to
    per-column bands and |z(x+1) - z(x)| <= max_jump. Raises
    InfeasibleBandError naming the column where no state is reachable.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    height, width = cost.shape
    lo = np.ascontiguousarray(band_lo, dtype=np.int64)
    hi = np.ascontiguousarray(band_hi, dtype=np.int64)
    if USING_NUMBA:
        table, fail = _dp_suffix_numba(cost, lo, hi, float(lam), int(max_jump))
    else:
        table, fail = _dp_suffix_numpy(cost, lo, hi, float(lam), int(max_jump))
    if fail >= 0:
        raise InfeasibleBandError(int(fail))
    return _reconstruct(table, lo, hi, float(lam), int(max_jump))


# ---------------------------------------------------------------------------
# Phantom tube rasterization and shadow attenuation
# ---------------------------------------------------------------------------
#
# Two passes: all tube interiors are written first, then each tube darkens
# every voxel below its bottom in its footprint columns, skipping voxels
# inside any vessel. Attenuation is strongest on the axis and fades to
# nothing just outside the footprint:
#   factor(dx) = 1 - (1 - atten) * (1 - (|dx| / (r + 0.5))^4)
# Loop order (vessel, slice, column ascending) fixes the multiply order, so
# overlapping shadows are reproducible bit for bit on both backends.

def _raster_tubes_numpy(data, vmask, zc, xc, radius, level):
    n_vessels, n_slices = zc.shape
    height = data.shape[1]
    width = data.shape[2]
    r2 = radius * radius
    for v in range(n_vessels):
        for s in range(n_slices):
            zv = zc[v, s]
            xv = xc[v, s]
            x0 = max(int(math.ceil(xv - radius)), 0)
            x1 = min(int(math.floor(xv + radius)), width - 1)
            for x in range(x0, x1 + 1):
                dd = r2 - (x - xv) * (x - xv)
                if dd < 0.0:
                    continue
                h = math.sqrt(dd)
                z0 = max(int(math.ceil(zv - h)), 0)
                z1 = min(int(math.floor(zv + h)), height - 1)
                if z1 < z0:
                    continue
                data[s, z0 : z1 + 1, x] = level
                vmask[s, z0 : z1 + 1, x] = True


def _apply_shadows_numpy(data, vmask, zc, xc, radius, atten):
    n_vessels, n_slices = zc.shape
    height = data.shape[1]
    width = data.shape[2]
    r2 = radius * radius
    edge = radius + 0.5
    for v in range(n_vessels):
        for s in range(n_slices):
            zv = zc[v, s]
            xv = xc[v, s]
            x0 = max(int(math.ceil(xv - radius)), 0)
            x1 = min(int(math.floor(xv + radius)), width - 1)
            for x in range(x0, x1 + 1):
                dd = r2 - (x - xv) * (x - xv)
                if dd < 0.0:
                    continue
                h = math.sqrt(dd)
                if int(math.floor(zv + h)) < int(math.ceil(zv - h)):
                    continue
                zb = min(int(math.floor(zv + h)), height - 1) + 1
                if zb >= height:
                    continue
                t = abs(x - xv) / edge
                factor = 1.0 - (1.0 - atten) * (1.0 - t * t * t * t)
                col = data[s, zb:, x]
                keep = ~vmask[s, zb:, x]
                col[keep] = col[keep] * factor


if USING_NUMBA:

    @njit(cache=True, nogil=True)
    def _raster_tubes_numba(data, vmask, zc, xc, radius, level):  # pragma: no cover - jit
        n_vessels, n_slices = zc.shape
        height = data.shape[1]
        width = data.shape[2]
        r2 = radius * radius
        for v in range(n_vessels):
            for s in range(n_slices):
                zv = zc[v, s]
                xv = xc[v, s]
                x0 = max(int(math.ceil(xv - radius)), 0)
                x1 = min(int(math.floor(xv + radius)), width - 1)
                for x in range(x0, x1 + 1):
                    dd = r2 - (x - xv) * (x - xv)
                    if dd < 0.0:
                        continue
                    h = math.sqrt(dd)
                    z0 = max(int(math.ceil(zv - h)), 0)
                    z1 = min(int(math.floor(zv + h)), height - 1)
                    for z in range(z0, z1 + 1):
                        data[s, z, x] = level
                        vmask[s, z, x] = True

    @njit(cache=True, nogil=True)
    def _apply_shadows_numba(data, vmask, zc, xc, radius, atten):  # pragma: no cover - jit
        n_vessels, n_slices = zc.shape
        height = data.shape[1]
        width = data.shape[2]
        r2 = radius * radius
        edge = radius + 0.5
        for v in range(n_vessels):
            for s in range(n_slices):
                zv = zc[v, s]
                xv = xc[v, s]
                x0 = max(int(math.ceil(xv - radius)), 0)
                x1 = min(int(math.floor(xv + radius)), width - 1)
                for x in range(x0, x1 + 1):
                    dd = r2 - (x - xv) * (x - xv)
                    if dd < 0.0:
                        continue
                    h = math.sqrt(dd)
                    if int(math.floor(zv + h)) < int(math.ceil(zv - h)):
                        continue
                    zb = min(int(math.floor(zv + h)), height - 1) + 1
                    if zb >= height:
                        continue
                    t = abs(x - xv) / edge
                    factor = 1.0 - (1.0 - atten) * (1.0 - t * t * t * t)
                    for z in range(zb, height):
                        if not vmask[s, z, x]:
                            data[s, z, x] = data[s, z, x] * factor


def raster_tubes(data, vmask, zc, xc, radius, level):
    """Write tube interiors (value `level`) and their voxel mask in place."""
    if zc.size == 0:
        return
    if USING_NUMBA:
        _raster_tubes_numba(data, vmask, zc, xc, float(radius), float(level))
    else:
        _raster_tubes_numpy(data, vmask, zc, xc, float(radius), float(level))


def apply_shadows(data, vmask, zc, xc, radius, atten):
    """Darken all non-vessel voxels below each tube in its footprint columns."""
    if zc.size == 0:
        return
    if USING_NUMBA:
        _apply_shadows_numba(data, vmask, zc, xc, float(radius), float(atten))
    else:
        _apply_shadows_numpy(data, vmask, zc, xc, float(radius), float(atten))
