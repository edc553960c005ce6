"""Adversarial target construction: erase one class from a label map.

Pixels predicted as the erased class c are relabeled with the class of
their nearest pixel that is not c, under exact Euclidean distance on the
integer grid. Ties at equal distance go to the smallest class index, which
makes the output a pure function of (prediction, c). Non-c pixels are kept
verbatim, so the constructed target contains no c at all.
"""

import numpy as np

from .errors import NoBackgroundClassError, ShapeError
from .kernels import edt_sq


def synthesize_target(pred, class_c):
    pred = np.asarray(pred)
    if pred.ndim != 2:
        raise ShapeError(f"label map must be 2-D, got rank {pred.ndim}")
    to_fill = pred == class_c
    if not to_fill.any():
        return pred.copy()
    other_classes = np.unique(pred[~to_fill]) if (~to_fill).any() else np.array([])
    if other_classes.size == 0:
        raise NoBackgroundClassError(
            f"prediction is entirely class {class_c}; no fill source exists"
        )
    # Per-class exact squared distances; argmin over classes in ascending
    # order implements the smallest-class-index tie rule.
    dists = np.stack([edt_sq(pred == k) for k in other_classes])
    fill = other_classes[np.argmin(dists, axis=0)]
    out = pred.copy()
    out[to_fill] = fill[to_fill]
    return out


def extract_mask(pred, class_c):
    """Boolean grid marking pixels predicted as class_c."""
    return np.asarray(pred) == class_c
