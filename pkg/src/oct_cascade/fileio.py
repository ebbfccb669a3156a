"""On-disk containers: raw grid files, boundary CSVs, and PGM images.

Grid values (volumes, masks, probability maps, en-face images) are stored
as a `<name>.json` header next to a `<name>.raw` little-endian payload in
slice-major, then depth, then column order. Intensities and probabilities
are 32-bit floats; masks are single 0/1 bytes. Boundaries travel as CSV
with one row per (boundary, slice, column).
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import CorruptFileError, ValidationError
from .model import (
    BOUNDARY_NAMES,
    BoundarySet,
    EnFaceImage,
    OctVolume,
    PixelMask,
    ProbabilityMap3D,
    VoxelMask,
)

_FORMAT = "oct-cascade-grid"
_VERSION = 1

GridValue = OctVolume | EnFaceImage | PixelMask | VoxelMask | ProbabilityMap3D

_KINDS: list[tuple[type, str, str]] = [
    (OctVolume, "intensity", "float32"),
    (EnFaceImage, "intensity", "float32"),
    (ProbabilityMap3D, "probability", "float32"),
    (VoxelMask, "mask", "uint8"),
    (PixelMask, "mask", "uint8"),
]


def _base_path(path: str) -> str:
    return path[: -len(".json")] if path.endswith(".json") else path


def write_volume(value: GridValue, path: str) -> None:
    """Write a grid value as `<path>.json` + `<path>.raw`.

    `path` may name either the base or the .json file; the .raw sibling is
    derived. The parent directory must already exist.
    """
    base = _base_path(path)
    for cls, kind, dtype in _KINDS:
        if isinstance(value, cls):
            break
    else:
        raise ValidationError(f"cannot serialize {type(value).__name__}")

    header = {
        "format": _FORMAT,
        "version": _VERSION,
        "kind": kind,
        "dims": list(value.data.shape),
        "dtype": dtype,
        "byte_order": "little",
        "spacing": list(value.spacing) if getattr(value, "spacing", None) else None,
    }
    payload = value.data.astype("<f4" if dtype == "float32" else np.uint8)
    try:
        with open(base + ".json", "w") as fh:
            json.dump(header, fh, indent=1, sort_keys=True)
            fh.write("\n")
        with open(base + ".raw", "wb") as fh:
            fh.write(payload.tobytes(order="C"))
    except OSError as exc:
        raise CorruptFileError(f"failed writing grid container {base!r}: {exc}") from exc


def read_volume(path: str) -> GridValue:
    """Read a grid container written by :func:`write_volume`.

    The concrete type is recovered from the header's kind and rank; range
    invariants are re-validated so a corrupt payload cannot leak out.
    """
    base = _base_path(path)
    try:
        with open(base + ".json") as fh:
            header = json.load(fh)
    except OSError as exc:
        raise CorruptFileError(f"cannot read grid header {base + '.json'!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"malformed grid header {base + '.json'!r}: {exc}") from exc

    if header.get("format") != _FORMAT:
        raise CorruptFileError(f"{base + '.json'!r} is not a grid container header")
    kind = header.get("kind")
    dims = tuple(int(d) for d in header.get("dims", ()))
    dtype = header.get("dtype")
    if header.get("byte_order") != "little":
        raise CorruptFileError(f"unsupported byte order {header.get('byte_order')!r}")
    if kind not in ("intensity", "probability", "mask") or dtype not in ("float32", "uint8"):
        raise CorruptFileError(f"unsupported kind/dtype {kind!r}/{dtype!r} in {base!r}")

    n_expected = int(np.prod(dims)) if dims else 0
    itemsize = 4 if dtype == "float32" else 1
    try:
        with open(base + ".raw", "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CorruptFileError(f"cannot read grid payload {base + '.raw'!r}: {exc}") from exc
    if len(raw) != n_expected * itemsize:
        raise CorruptFileError(
            f"{base + '.raw'!r}: payload has {len(raw) // itemsize} elements, "
            f"header dims {dims} require {n_expected}"
        )

    flat = np.frombuffer(raw, dtype="<f4" if dtype == "float32" else np.uint8)
    data = flat.reshape(dims)

    if kind == "mask":
        bad = (data != 0) & (data != 1)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise ValidationError(f"mask byte {int(data[idx])} at voxel {idx} is not 0/1")
        arr = data.astype(bool)
        return VoxelMask(arr) if arr.ndim == 3 else PixelMask(arr)

    # ValidationError from the constructors already names the offending voxel.
    if kind == "probability":
        return ProbabilityMap3D(data)
    if data.ndim == 2:
        return EnFaceImage(data)
    spacing = header.get("spacing")
    return OctVolume(data, spacing=tuple(spacing) if spacing else None)


def write_boundaries(b: BoundarySet, path: str) -> None:
    """Write a boundary set as CSV rows (boundary, slice, column, depth)."""
    n_slices, width = b.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["boundary", "slice", "column", "depth"])
        for name in BOUNDARY_NAMES:
            surf = b[name]
            for s in range(n_slices):
                for x in range(width):
                    writer.writerow([name, s, x, repr(float(surf[s, x]))])


def read_boundaries(path: str) -> BoundarySet:
    """Read a boundary CSV, re-validating completeness and ordering."""
    cells: dict[str, dict[tuple[int, int], float]] = {n: {} for n in BOUNDARY_NAMES}
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["boundary", "slice", "column", "depth"]:
                raise CorruptFileError(f"{path!r}: unexpected boundary CSV header {header}")
            for row in reader:
                if not row:
                    continue
                if len(row) != 4:
                    raise CorruptFileError(f"{path!r}: malformed row {row}")
                name, s, x, depth = row[0], int(row[1]), int(row[2]), float(row[3])
                if name not in cells:
                    raise CorruptFileError(f"{path!r}: unknown boundary {name!r}")
                cells[name][(s, x)] = depth
    except OSError as exc:
        raise CorruptFileError(f"cannot read boundaries {path!r}: {exc}") from exc

    keys = cells[BOUNDARY_NAMES[0]].keys()
    if not keys:
        raise ValidationError(f"{path!r}: boundary CSV contains no rows")
    n_slices = max(k[0] for k in keys) + 1
    width = max(k[1] for k in keys) + 1
    surfaces = {}
    for name in BOUNDARY_NAMES:
        got = cells[name]
        if len(got) != n_slices * width:
            raise ValidationError(
                f"{path!r}: incomplete boundary set, {name} has {len(got)} of "
                f"{n_slices * width} cells"
            )
        arr = np.empty((n_slices, width), dtype=np.float64)
        for (s, x), depth in got.items():
            if s >= n_slices or x >= width:
                raise CorruptFileError(f"{path!r}: cell ({s},{x}) outside grid")
            arr[s, x] = depth
        surfaces[name] = arr
    # BoundarySet re-validates the ordering invariant and names the cell.
    return BoundarySet(surfaces)


def write_pgm(image: np.ndarray, path: str) -> None:
    """Write a [0, 1] float or boolean 2D array as a binary 8-bit PGM."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValidationError(f"PGM image must be 2D, got ndim={arr.ndim}")
    if arr.dtype == bool:
        gray = np.where(arr, 255, 0).astype(np.uint8)
    else:
        gray = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes(order="C"))


def ensure_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
