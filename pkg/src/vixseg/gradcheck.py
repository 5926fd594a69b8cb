"""Finite-difference verification of the analytic gradients.

Builds a small reference model in float64, computes the composite loss and
its tape gradients once, then compares central differences against the
analytic gradient on a coordinate subsample: every coordinate for tensors
under the sample budget, a seeded random subset otherwise.  Coordinates
whose gradients are below 1e-6 in magnitude are compared absolutely;
everything else relatively.

Two steps are evaluated per coordinate and the better agreement wins.
Exponential gating amplifies higher derivatives along globally-influential
coordinates (an encoder bias shifts every token's gate pre-activation
coherently), so truncation demands a small step there (1e-6); coordinates
with gradients near the 1e-6 threshold are instead limited by float64
cancellation noise, which demands a larger one (8e-6).  A wrong backward
rule disagrees with both, since both difference quotients converge on the
true derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import composite_loss, one_hot
from .rng import derive_rng
from .tensor import Tape, Tensor, no_grad, precision
from .unet import ModelConfig, VilUNet

TINY_CONFIG = ModelConfig(
    spatial_rank=2,
    levels=2,
    base_channels=4,
    patch_size=2,
    embed_dim=8,
    vil_blocks=2,
    num_classes=3,
)
TINY_EXTENTS = (16, 16)

FD_STEPS = (1e-6, 8e-6)
SMALL_GRAD = 1e-6
MIN_COORDS = 200


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    checked: int

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_err <= tolerance


def _coord_sample(shape, budget: int, rng) -> np.ndarray:
    n = int(np.prod(shape))
    if n <= budget:
        return np.arange(n)
    return np.sort(rng.choice(n, size=budget, replace=False))


def gradcheck_model(model: VilUNet, image: Tensor, gt_onehot: np.ndarray,
                    mu: float = 1e-5, budget: int = MIN_COORDS,
                    seed: int = 0) -> list[ParamCheck]:
    """Per-parameter max relative error of analytic vs central-difference grads."""

    def loss_value() -> float:
        with no_grad():
            return composite_loss(model.forward(image), gt_onehot, mu=mu).item()

    model.zero_grad()
    with Tape() as tape:
        loss = composite_loss(model.forward(image), gt_onehot, mu=mu)
        tape.backward(loss)

    rng = derive_rng(seed, "gradcheck")
    results = []
    for p in model.parameters():
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        coords = _coord_sample(p.shape, budget, rng)
        worst = 0.0
        for c in coords:
            an = gflat[c]
            orig = flat[c]
            err = None
            for step in FD_STEPS:
                flat[c] = orig + step
                up = loss_value()
                flat[c] = orig - step
                down = loss_value()
                flat[c] = orig
                fd = (up - down) / (2.0 * step)
                denom = max(abs(fd), abs(an))
                e = abs(fd - an) if denom < SMALL_GRAD else abs(fd - an) / denom
                err = e if err is None else min(err, e)
            worst = max(worst, err)
        results.append(ParamCheck(p.name, worst, len(coords)))
    return results


def run_reference_gradcheck(tolerance: float = 1e-4, seed: int = 0,
                            budget: int = MIN_COORDS):
    """The standard check: tiny model, float64, fixed seeded input/target."""
    with precision("float64"):
        model = VilUNet(TINY_CONFIG, TINY_EXTENTS, seed=seed)
        rng = derive_rng(seed, "gradcheck-data")
        # displace every parameter to a generic point: zero-initialized biases
        # put whole regions of ReLU pre-activations exactly on their kink
        # (all-zero receptive fields), where central differences measure the
        # smoothed slope instead of the one-sided derivative
        for p in model.parameters():
            p.data += rng.normal(0.0, 0.02, size=p.shape)
        image = Tensor(rng.uniform(0.0, 1.0, size=(1,) + TINY_EXTENTS))
        labels = rng.integers(0, TINY_CONFIG.num_classes, size=TINY_EXTENTS)
        gt = one_hot(labels, TINY_CONFIG.num_classes, dtype=np.float64)
        checks = gradcheck_model(model, image, gt, budget=budget, seed=seed)
    offenders = [c for c in checks if not c.passed(tolerance)]
    return checks, offenders
