"""Evaluation: per-case argmax prediction scored with DSC/IoU/HD95."""

from __future__ import annotations

import os

import numpy as np

from .data import load_manifest, load_sample
from .errors import ConfigError
from .metrics import (
    MetricReport,
    evaluate_case,
    write_case_csv,
    write_dotplot_csv,
)
from .tensor import Tensor, no_grad
from .unet import VilUNet


def predict_labels(model: VilUNet, image: np.ndarray) -> np.ndarray:
    with no_grad():
        probs = model.forward(Tensor(image))
    return probs.data.argmax(axis=0).astype(np.uint8)


def evaluate_manifest(manifest_path, num_classes: int, predict, spacing=None
                      ) -> list[MetricReport]:
    """Score every case; `predict` maps a (1, *spatial) image to a label map.

    HD95 entries that are undefined (exactly one empty mask) carry the image
    diagonal and a cleared flag.
    """
    entries = load_manifest(manifest_path)
    if not entries:
        raise ConfigError(f"manifest {manifest_path} is empty")
    reports = []
    for entry in entries:
        sample = load_sample(entry, num_classes)
        pred = predict(sample.image)
        if pred.shape != sample.mask.shape:
            raise ConfigError(
                f"{entry.case_id}: prediction extents {pred.shape} do not match "
                f"mask extents {sample.mask.shape}"
            )
        reports.append(
            evaluate_case(entry.case_id, pred, sample.mask, num_classes, spacing)
        )
    return reports


def mean_foreground_dsc(reports: list[MetricReport]) -> float:
    return float(np.mean([r.mean_dsc() for r in reports]))


def write_eval_outputs(out_dir, reports: list[MetricReport]) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    case_csv = os.path.join(out_dir, "metrics.csv")
    dot_csv = os.path.join(out_dir, "dotplot.csv")
    write_case_csv(case_csv, reports)
    write_dotplot_csv(dot_csv, reports)
    return case_csv, dot_csv
