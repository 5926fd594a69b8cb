"""Reference softmax-attention mixer used only to benchmark scaling.

Single head, scale 1/sqrt(Z), plain numpy (no gradients):
out = softmax(Q K^T / sqrt(Z)) V with Q, K, V linear in the input.
"""

from __future__ import annotations

import math

import numpy as np


def attention_params(z: int, rng) -> dict[str, np.ndarray]:
    std = 1.0 / math.sqrt(z)
    return {
        "wq": rng.normal(0, std, size=(z, z)),
        "wk": rng.normal(0, std, size=(z, z)),
        "wv": rng.normal(0, std, size=(z, z)),
    }


_ROW_BLOCK = 128


def softmax_attention_reference(x: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    """Evaluated in row blocks so the score-matrix working set stays
    cache-resident at every sequence length; the result is the plain
    softmax attention value."""
    n, z = x.shape
    q = x @ params["wq"]
    k = x @ params["wk"]
    v = x @ params["wv"]
    kt = np.ascontiguousarray(k.T)
    out = np.empty_like(q)
    inv_scale = 1.0 / math.sqrt(z)
    for start in range(0, n, _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, n)
        scores = (q[start:stop] @ kt) * inv_scale
        scores -= scores.max(axis=1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=1, keepdims=True)
        out[start:stop] = scores @ v
    return out


def attention_flops(n: int, z: int) -> int:
    """Projections + score matrix + softmax + value mix; quadratic in n."""
    proj = 3 * 2 * n * z * z
    scores = 2 * n * n * z + n * n          # Q K^T and the 1/sqrt(Z) scale
    softmax = 5 * n * n                      # max-subtract, exp, sum, divide
    mix = 2 * n * n * z
    return proj + scores + softmax + mix


def attention_state_bytes(n: int, z: int, itemsize: int = 4) -> int:
    """The key/value buffer every token must keep visible: grows with n."""
    return 2 * n * z * itemsize
