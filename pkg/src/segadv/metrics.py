"""Attack-effect metrics and sweep aggregation.

Both attack metrics are computed against the network's original prediction,
not against ground truth: fooled = share of originally-class-c pixels no
longer predicted as c, preserved = share of remaining pixels whose
prediction did not change.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import LabelRangeError, ShapeError


@dataclass
class PairMetrics:
    """Per-image attack effect. Fractions are None when their pixel set is empty."""
    fooled: Optional[float]
    preserved: Optional[float]
    n_class_pixels: int
    n_background_pixels: int


def pair_metrics(pred_orig, pred_adv, class_c):
    if pred_orig.shape != pred_adv.shape:
        raise ShapeError(
            f"prediction shapes differ: {pred_orig.shape} vs {pred_adv.shape}"
        )
    in_class = pred_orig == class_c
    n_class = int(in_class.sum())
    n_bg = int(in_class.size - n_class)
    fooled = None
    preserved = None
    if n_class:
        fooled = float((pred_adv[in_class] != class_c).sum() / n_class)
    if n_bg:
        preserved = float((pred_adv[~in_class] == pred_orig[~in_class]).sum() / n_bg)
    return PairMetrics(fooled, preserved, n_class, n_bg)


def confusion_matrix(pred, truth, num_classes):
    """(K,K) counts, rows = truth, columns = prediction."""
    if pred.shape != truth.shape:
        raise ShapeError(f"shapes differ: {pred.shape} vs {truth.shape}")
    for name, arr in (("pred", pred), ("truth", truth)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise LabelRangeError(
                f"{name} labels outside [0,{num_classes})"
            )
    idx = truth.astype(np.int64).ravel() * num_classes + pred.astype(np.int64).ravel()
    return np.bincount(idx, minlength=num_classes * num_classes).reshape(
        num_classes, num_classes
    )


def miou_from_confusion(conf):
    """Mean IoU over classes present in truth or prediction; absent classes skipped."""
    inter = np.diag(conf)
    union = conf.sum(axis=0) + conf.sum(axis=1) - inter
    present = union > 0
    if not present.any():
        return float("nan")
    return float((inter[present] / union[present]).mean())


def mean_iou(pred, truth, num_classes):
    """Per-pair mean intersection over union."""
    return miou_from_confusion(confusion_matrix(pred, truth, num_classes))


@dataclass
class SweepRow:
    epsilon: float
    mean_fooled: float
    std_fooled: float
    mean_preserved: float
    std_preserved: float
    n_images: int
    n_excluded_fooled: int = 0
    n_excluded_preserved: int = 0


@dataclass
class SweepReport:
    rows: list
    per_image: list  # (epsilon, PairMetrics) as supplied


def aggregate_sweep(records):
    """Aggregate per-image metrics into mean +/- population std per epsilon.

    `records` is an iterable of (epsilon, PairMetrics). Undefined fractions
    are excluded and counted; a group with no defined value for a metric is
    an error.
    """
    records = list(records)
    groups = {}
    for eps, pm in records:
        groups.setdefault(float(eps), []).append(pm)
    rows = []
    for eps in sorted(groups):
        fooled = [pm.fooled for pm in groups[eps] if pm.fooled is not None]
        preserved = [pm.preserved for pm in groups[eps] if pm.preserved is not None]
        if not fooled:
            raise ValueError(f"no defined fooled fraction for epsilon={eps}")
        if not preserved:
            raise ValueError(f"no defined preserved fraction for epsilon={eps}")
        rows.append(SweepRow(
            epsilon=eps,
            mean_fooled=float(np.mean(fooled)),
            std_fooled=float(np.std(fooled)),
            mean_preserved=float(np.mean(preserved)),
            std_preserved=float(np.std(preserved)),
            n_images=len(groups[eps]),
            n_excluded_fooled=len(groups[eps]) - len(fooled),
            n_excluded_preserved=len(groups[eps]) - len(preserved),
        ))
    return SweepReport(rows=rows, per_image=records)
