"""The training loop: batch -> augment -> forward -> composite loss ->
backward -> optimizer step, with per-iteration loss logging and periodic
checkpoints.

All per-iteration randomness (batch selection, augmentation draws) derives
statelessly from (seed, iteration), so resuming from a checkpoint reproduces
an unbroken run bit for bit.  Loss CSVs contain no timestamps; wall-clock
notes go to a separate log file.
"""

from __future__ import annotations

import os
import time
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import augment, load_manifest, load_sample
from .errors import ConfigError, NumericError
from .losses import composite_loss, one_hot
from .optim import AdamW
from .rng import derive_rng
from .tensor import Tape, Tensor, scale
from .unet import ModelConfig, VilUNet

CHECKPOINT_EVERY = 100

_META_KEYS = (
    "levels", "base_channels", "patch_size", "embed_dim", "vil_blocks",
    "heads", "num_classes", "spatial_rank",
)


def checkpoint_arrays(model: VilUNet, opt: AdamW | None, iteration: int) -> OrderedDict:
    arrays: OrderedDict[str, np.ndarray] = OrderedDict()
    for name, p in model.param_dict().items():
        arrays[name] = p.data
    if opt is not None:
        arrays.update(opt.state_arrays())
    cfg = model.cfg
    for key in _META_KEYS:
        arrays[f"meta.{key}"] = np.array([getattr(cfg, key)], dtype=np.float32)
    arrays["meta.residual_vil"] = np.array([int(cfg.residual_vil)], dtype=np.float32)
    arrays["meta.downsample_maxpool"] = np.array(
        [int(cfg.downsample == "maxpool")], dtype=np.float32
    )
    arrays["meta.input_extents"] = np.array(model.input_extents, dtype=np.float32)
    arrays["meta.iter"] = np.array([iteration], dtype=np.float32)
    return arrays


def model_from_checkpoint(path, seed: int = 0) -> tuple[VilUNet, dict]:
    arrays = load_checkpoint(path)
    try:
        kwargs = {k: int(arrays[f"meta.{k}"][0]) for k in _META_KEYS}
        cfg = ModelConfig(
            residual_vil=bool(int(arrays["meta.residual_vil"][0])),
            downsample="maxpool" if int(arrays["meta.downsample_maxpool"][0]) else "conv",
            **kwargs,
        )
        extents = tuple(int(e) for e in arrays["meta.input_extents"])
    except KeyError as exc:
        raise ConfigError(f"checkpoint {path} lacks metadata record {exc}") from exc
    model = VilUNet(cfg, extents, seed=seed)
    model.load_arrays(arrays)
    return model, arrays


@dataclass
class TrainResult:
    losses: list[tuple[int, float]]
    checkpoint_path: str
    loss_csv_path: str
    aborted_at: int | None = None


def _batch_indices(seed: int, iteration: int, n_cases: int, batch_size: int) -> list[int]:
    rng = derive_rng(seed, "batch", iteration)
    if batch_size >= n_cases:
        return list(rng.permutation(n_cases))
    return list(rng.permutation(n_cases)[:batch_size])


def train(cfg: RunConfig, out_dir, resume: str | None = None,
          augment_data: bool = True) -> TrainResult:
    cfg.validate()
    if not cfg.train_manifest:
        raise ConfigError("train_manifest is required for training")
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "train.log")
    log = open(log_path, "a")

    def note(msg: str) -> None:
        log.write(f"[{time.strftime('%Y-%m-%d %H:%M:%S')}] {msg}\n")
        log.flush()

    try:
        return _train_loop(cfg, out_dir, resume, augment_data, note)
    finally:
        log.close()


def _train_loop(cfg: RunConfig, out_dir, resume, augment_data, note) -> TrainResult:
    entries = load_manifest(cfg.train_manifest)
    if not entries:
        raise ConfigError(f"train manifest {cfg.train_manifest} is empty")
    if cfg.test_manifest:
        test_ids = {e.case_id for e in load_manifest(cfg.test_manifest)}
        leaked = test_ids & {e.case_id for e in entries}
        if leaked:
            raise ConfigError(f"case ids appear in both splits: {sorted(leaked)}")
    first = load_sample(entries[0], cfg.num_classes)
    extents = first.mask.shape

    model = VilUNet(cfg.model_config(), extents, seed=cfg.seed)
    opt = AdamW(
        model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay
    )
    start_iter = 0
    if resume:
        arrays = load_checkpoint(resume)
        model.load_arrays(arrays)
        opt.load_state_arrays(arrays)
        start_iter = int(arrays["meta.iter"][0])
        note(f"resumed from {resume} at iteration {start_iter}")

    losses: list[tuple[int, float]] = []
    ckpt_path = os.path.join(out_dir, "checkpoint.uvxw")
    loss_csv = os.path.join(out_dir, "loss.csv")
    aborted_at = None

    if start_iter == 0:
        save_checkpoint(ckpt_path, checkpoint_arrays(model, opt, 0))
    note(f"training {cfg.iters} iterations on {len(entries)} cases, extents {extents}")
    t0 = time.perf_counter()
    for it in range(start_iter + 1, cfg.iters + 1):
        batch = []
        for slot, idx in enumerate(_batch_indices(cfg.seed, it, len(entries), cfg.batch_size)):
            sample = load_sample(entries[idx], cfg.num_classes)
            if augment_data:
                sample = augment(sample, derive_rng(cfg.seed, "augseed", it, slot).integers(2**63))
            batch.append(sample)
        with Tape() as tape:
            total = None
            for sample in batch:
                pred = model.forward(Tensor(sample.image))
                gt = one_hot(sample.mask, cfg.num_classes, dtype=pred.data.dtype)
                term = composite_loss(pred, gt, mu=cfg.mu)
                total = term if total is None else total + term
            loss = scale(total, 1.0 / len(batch))
            value = loss.item()
            if not np.isfinite(value):
                aborted_at = it
                note(f"non-finite loss at iteration {it}; last checkpoint retained")
                break
            model.zero_grad()
            tape.backward(loss)
        opt.step()
        losses.append((it, value))
        if it % CHECKPOINT_EVERY == 0:
            save_checkpoint(ckpt_path, checkpoint_arrays(model, opt, it))
    if aborted_at is None:
        save_checkpoint(
            ckpt_path, checkpoint_arrays(model, opt, max(cfg.iters, start_iter))
        )
    note(f"done in {time.perf_counter() - t0:.1f}s")

    append = bool(resume) and os.path.exists(loss_csv)
    with open(loss_csv, "a" if append else "w", newline="") as fh:
        if not append:
            fh.write("iter,loss\n")
        for it, value in losses:
            fh.write(f"{it},{value!r}\n")
    result = TrainResult(losses, ckpt_path, loss_csv, aborted_at)
    if aborted_at is not None:
        raise NumericError(
            f"non-finite loss at iteration {aborted_at}; "
            f"last good checkpoint kept at {ckpt_path}"
        )
    return result
