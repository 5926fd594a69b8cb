"""Training losses: soft Dice, categorical cross-entropy, and their sum.

All three are tape-differentiable.  Predictions are channel-softmax outputs
(classes, *spatial); ground truth is a one-hot mask of the same shape.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, add, div, maximum, mul, scale, tlog, tsum


def one_hot(labels: np.ndarray, num_classes: int, dtype=None) -> np.ndarray:
    """Label map (*spatial) -> one-hot (classes, *spatial)."""
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ShapeError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    out = np.zeros((num_classes,) + labels.shape, dtype=dtype or np.float32)
    for c in range(num_classes):
        out[c][labels == c] = 1.0
    return out


def _check_pair(pred, gt) -> None:
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and target {gt.shape} disagree")


def dice_loss(pred, gt, mu: float = 1e-5):
    """1 - mean over classes of (2*sum(p*g) + mu) / (sum(p) + sum(g) + mu)."""
    _check_pair(pred, gt)
    gt = gt if isinstance(gt, Tensor) else Tensor(gt, dtype=pred.data.dtype)
    c = pred.shape[0]
    spatial_axes = tuple(range(1, pred.ndim))
    inter = tsum(mul(pred, gt), axis=spatial_axes)          # (c,)
    psum = tsum(pred, axis=spatial_axes)
    gsum = gt.data.sum(axis=spatial_axes)
    num = add(scale(inter, 2.0), Tensor(np.full(c, mu), dtype=pred.data.dtype))
    den = add(psum, Tensor(gsum + mu, dtype=pred.data.dtype))
    per_class = div(num, den)
    return add(1.0, scale(tsum(per_class), -1.0 / c))


def cce_loss(pred, gt, floor: float = 1e-12):
    """-(1/T) * sum over locations and classes of g * log(max(p, floor))."""
    _check_pair(pred, gt)
    gt = gt if isinstance(gt, Tensor) else Tensor(gt, dtype=pred.data.dtype)
    t_locations = int(np.prod(pred.shape[1:]))
    logp = tlog(maximum(pred, Tensor(floor, dtype=pred.data.dtype)))
    return scale(tsum(mul(gt, logp)), -1.0 / t_locations)


def composite_loss(pred, gt, mu: float = 1e-5):
    """dice_loss + cce_loss with unit weights."""
    return add(dice_loss(pred, gt, mu=mu), cce_loss(pred, gt))
