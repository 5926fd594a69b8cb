"""AdamW with decoupled weight decay.

Decay is applied to the value directly (v <- v - lr*wd*v), never folded into
the gradient.  First/second moments are bias-corrected and persist across
steps; they can be exported for mid-training checkpoints.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .tensor import Parameter


class AdamW:
    def __init__(
        self,
        params: list[Parameter],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-5,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        # validate every gradient before touching any value: a failed step
        # must leave all parameters and moments unchanged
        for p in self.params:
            if not np.isfinite(p.grad).all():
                raise NumericError(f"non-finite gradient for parameter '{p.name}'")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            g = p.grad
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    # moment export/import for checkpoints
    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"opt.t": np.array([self.t], dtype=np.float32)}
        for p in self.params:
            out[f"opt.m.{p.name}"] = self.m[p.name]
            out[f"opt.v.{p.name}"] = self.v[p.name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays["opt.t"][0])
        for p in self.params:
            self.m[p.name] = np.asarray(arrays[f"opt.m.{p.name}"], dtype=p.data.dtype)
            self.v[p.name] = np.asarray(arrays[f"opt.v.{p.name}"], dtype=p.data.dtype)
