"""Evaluation metrics: hard DSC/IoU per class and the 95% Hausdorff distance.

Conventions, chosen to keep means finite and auditable:
  - a class empty in both prediction and ground truth scores DSC = IoU = 1;
  - HD95 of two empty masks is 0; if exactly one side is empty the value is
    undefined, flagged, and the image diagonal is substituted wherever a
    mean is formed;
  - reported means cover foreground classes only (class 0 is background);
  - the 95th percentile interpolates linearly between order statistics.

Boundary voxels are foreground voxels with at least one face-adjacent
background voxel; positions outside the array count as background.  Nearest
distances come from an exact Euclidean distance transform; each distance is
recomputed from the matched voxel pair so values agree bit-for-bit with an
all-pairs evaluation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ShapeError


def dsc_iou(pred_labels: np.ndarray, gt_labels: np.ndarray, num_classes: int):
    """Per-class hard (DSC, IoU) arrays for label maps of equal shape."""
    if pred_labels.shape != gt_labels.shape:
        raise ShapeError(
            f"label maps disagree: {pred_labels.shape} vs {gt_labels.shape}"
        )
    for name, lab in (("prediction", pred_labels), ("ground truth", gt_labels)):
        if lab.min() < 0 or lab.max() >= num_classes:
            raise ShapeError(
                f"{name} labels out of range [0, {num_classes}): "
                f"[{lab.min()}, {lab.max()}]"
            )
    dsc = np.zeros(num_classes)
    iou = np.zeros(num_classes)
    for c in range(num_classes):
        a = pred_labels == c
        b = gt_labels == c
        inter = int(np.logical_and(a, b).sum())
        sa, sb = int(a.sum()), int(b.sum())
        union = sa + sb - inter
        if sa == 0 and sb == 0:
            dsc[c] = iou[c] = 1.0
        else:
            dsc[c] = 2.0 * inter / (sa + sb)
            iou[c] = inter / union
    return dsc, iou


def boundary_voxels(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with a face-adjacent background (array edge counts)."""
    m = mask.astype(bool)
    interior = np.ones_like(m)
    for ax in range(m.ndim):
        lo = np.ones_like(m)
        hi = np.ones_like(m)
        sl_lo = [slice(None)] * m.ndim
        sl_hi = [slice(None)] * m.ndim
        sl_lo[ax] = slice(1, None)
        sl_hi[ax] = slice(None, -1)
        lo[tuple(sl_lo)] = m[tuple(sl_hi)]   # neighbor at index-1; edge -> background
        hi[tuple(sl_hi)] = m[tuple(sl_lo)]   # neighbor at index+1
        interior &= lo & hi
    return m & ~interior


def _pair_distance(a: np.ndarray, b: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    """Euclidean distance between voxel index rows; the shared formula."""
    delta = (a - b) * spacing
    return np.sqrt((delta * delta).sum(axis=-1))


def _directed_distances(src_pts: np.ndarray, dst_bound: np.ndarray, spacing) -> np.ndarray:
    """Distance from each src boundary voxel to its nearest dst boundary voxel."""
    _, indices = ndimage.distance_transform_edt(
        ~dst_bound, sampling=spacing, return_indices=True
    )
    nearest = indices[(slice(None),) + tuple(src_pts.T)].T  # (n_src, rank)
    return _pair_distance(src_pts.astype(np.float64), nearest.astype(np.float64),
                          np.asarray(spacing, dtype=np.float64))


def image_diagonal(shape, spacing) -> float:
    return float(
        math.sqrt(sum((e * s) ** 2 for e, s in zip(shape, spacing)))
    )


def hd95(pred_mask: np.ndarray, gt_mask: np.ndarray, spacing=None):
    """Symmetric 95th-percentile boundary distance.

    Returns (value, defined).  Both masks empty -> (0.0, True); exactly one
    empty -> (image diagonal, False).
    """
    if pred_mask.shape != gt_mask.shape:
        raise ShapeError(f"masks disagree: {pred_mask.shape} vs {gt_mask.shape}")
    rank = pred_mask.ndim
    spacing = np.ones(rank) if spacing is None else np.asarray(spacing, dtype=np.float64)
    if spacing.shape != (rank,) or np.any(spacing <= 0):
        raise ConfigError(f"spacing must be {rank} strictly positive reals")
    a_empty = not pred_mask.any()
    b_empty = not gt_mask.any()
    if a_empty and b_empty:
        return 0.0, True
    if a_empty != b_empty:
        return image_diagonal(pred_mask.shape, spacing), False
    ba = boundary_voxels(pred_mask)
    bb = boundary_voxels(gt_mask)
    pa = np.argwhere(ba)
    pb = np.argwhere(bb)
    d_ab = _directed_distances(pa, bb, spacing)
    d_ba = _directed_distances(pb, ba, spacing)
    return (
        float(
            max(
                np.percentile(d_ab, 95, method="linear"),
                np.percentile(d_ba, 95, method="linear"),
            )
        ),
        True,
    )


# ---------------------------------------------------------------------------
# per-case report


@dataclass
class MetricReport:
    """Per-class metrics for one case; means cover foreground classes only."""

    case_id: str
    dsc: np.ndarray
    iou: np.ndarray
    hd95_values: np.ndarray          # undefined entries already hold the diagonal
    hd95_defined: np.ndarray = field(default=None)

    @property
    def num_classes(self) -> int:
        return len(self.dsc)

    def mean_dsc(self) -> float:
        return float(self.dsc[1:].mean())

    def mean_iou(self) -> float:
        return float(self.iou[1:].mean())

    def mean_hd95(self) -> float:
        return float(self.hd95_values[1:].mean())


def evaluate_case(case_id, pred_labels, gt_labels, num_classes, spacing=None) -> MetricReport:
    dsc, iou = dsc_iou(pred_labels, gt_labels, num_classes)
    hvals = np.zeros(num_classes)
    hdef = np.zeros(num_classes, dtype=bool)
    for c in range(num_classes):
        hvals[c], hdef[c] = hd95(pred_labels == c, gt_labels == c, spacing)
    return MetricReport(case_id, dsc, iou, hvals, hdef)


CASE_CSV_HEADER = ["case_id", "class_id", "dsc", "iou", "hd95", "hd95_defined"]


def write_case_csv(path, reports: list[MetricReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CASE_CSV_HEADER)
        for r in reports:
            for c in range(r.num_classes):
                w.writerow(
                    [
                        r.case_id,
                        c,
                        repr(float(r.dsc[c])),
                        repr(float(r.iou[c])),
                        repr(float(r.hd95_values[c])),
                        int(r.hd95_defined[c]),
                    ]
                )


DOTPLOT_CSV_HEADER = ["class_id", "metric", "mean", "std"]


def write_dotplot_csv(path, reports: list[MetricReport]) -> None:
    """Per (class, metric) mean and population standard deviation over cases."""
    num_classes = reports[0].num_classes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DOTPLOT_CSV_HEADER)
        for c in range(num_classes):
            for metric, getter in (
                ("dsc", lambda r: r.dsc[c]),
                ("iou", lambda r: r.iou[c]),
                ("hd95", lambda r: r.hd95_values[c]),
            ):
                vals = np.array([getter(r) for r in reports], dtype=np.float64)
                w.writerow([c, metric, repr(float(vals.mean())), repr(float(vals.std()))])
