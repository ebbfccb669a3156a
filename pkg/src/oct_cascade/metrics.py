"""Segmentation evaluation metrics and the polynomial LR schedule utility.

All metrics are defined on exact integer confusion counts over pooled
voxels. ROC area is computed by sweeping every distinct score as a
threshold and integrating with the trapezoidal rule, which equals the
pairwise ranking statistic with ties counted half.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeMismatchError, UndefinedAucError
from .model import ProbabilityMap3D, VoxelMask, require_same_dims


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsReport:
    """One method's scores. `auc` is None when no probability map exists;
    `flags` records degenerate 0/0 ratios resolved to the perfect-empty 1.0."""

    method: str
    iou: float
    sen: float
    acc: float
    auc: float | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("iou", "sen", "acc"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name}={v} outside [0, 1]")
        if self.auc is not None and not (0.0 <= self.auc <= 1.0):
            raise ConfigError(f"auc={self.auc} outside [0, 1]")


@dataclass(frozen=True)
class ScheduleParams:
    base_lr: float
    iter: int
    max_iter: int
    power: float = 0.9

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not (0 <= self.iter <= self.max_iter):
            raise ConfigError("need 0 <= iter <= max_iter")
        if self.power <= 0:
            raise ConfigError("power must be positive")


def confusion(pred: VoxelMask, gt: VoxelMask) -> ConfusionCounts:
    """Exact voxel counts of the four confusion cells."""
    require_same_dims(pred, gt, "prediction vs ground truth")
    p = pred.data
    g = gt.data
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def _ratio(num: int, den: int) -> tuple[float, bool]:
    # 0/0 compares nothing against nothing: a perfect match, flagged.
    if den == 0:
        return 1.0, True
    return num / den, False


def iou(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fp + c.fn)[0]


def sen(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fn)[0]


def acc(c: ConfusionCounts) -> float:
    return _ratio(c.tp + c.tn, c.total)[0]


def build_report(method: str, c: ConfusionCounts, auc_value: float | None = None) -> MetricsReport:
    """Assemble a MetricsReport, flagging any degenerate 0/0 ratio."""
    flags = []
    iou_v, d = _ratio(c.tp, c.tp + c.fp + c.fn)
    if d:
        flags.append("iou_degenerate")
    sen_v, d = _ratio(c.tp, c.tp + c.fn)
    if d:
        flags.append("sen_degenerate")
    acc_v, d = _ratio(c.tp + c.tn, c.total)
    if d:
        flags.append("acc_degenerate")
    if auc_value is None:
        flags.append("auc_unavailable")
    return MetricsReport(
        method=method, iou=iou_v, sen=sen_v, acc=acc_v, auc=auc_value, flags=tuple(flags)
    )


def auc(
    scores: ProbabilityMap3D | np.ndarray,
    gt: VoxelMask | np.ndarray,
    region: VoxelMask | None = None,
) -> float:
    """ROC area of the scores against a binary ground truth.

    Thresholds sweep every distinct score value inside `region` (the whole
    grid when absent). Raises UndefinedAucError when the ground truth is
    single-class there.
    """
    s = scores.data if isinstance(scores, ProbabilityMap3D) else np.asarray(scores)
    g = gt.data if isinstance(gt, VoxelMask) else np.asarray(gt, dtype=bool)
    if s.shape != g.shape:
        raise ShapeMismatchError(f"scores shape {s.shape} != ground truth shape {g.shape}")
    if region is not None:
        if region.data.shape != g.shape:
            raise ShapeMismatchError(
                f"region shape {region.data.shape} != scores shape {g.shape}"
            )
        s = s[region.data]
        g = g[region.data]
    s = np.asarray(s, dtype=np.float64).ravel()
    g = np.asarray(g, dtype=bool).ravel()

    n_pos = int(g.sum())
    n_neg = g.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError(
            f"ROC area undefined: ground truth has {n_pos} positives and {n_neg} negatives"
        )

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    g_sorted = g[order]
    # Collapse ties: ROC points only at the last element of each score run.
    distinct = np.nonzero(np.diff(s_sorted))[0]
    run_ends = np.concatenate([distinct, [s.size - 1]])
    tp = np.cumsum(g_sorted)[run_ends]
    fp = (run_ends + 1) - tp
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    # accumulated rounding can land an ulp outside [0, 1]
    return float(min(max(np.trapezoid(tpr, fpr), 0.0), 1.0))


def poly_lr(p: ScheduleParams) -> float:
    """Polynomial decay: base_lr * (1 - iter / max_iter) ** power."""
    return p.base_lr * (1.0 - p.iter / p.max_iter) ** p.power
