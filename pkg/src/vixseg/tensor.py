"""Dense tensors with a reverse-mode gradient tape.

Values are numpy arrays in row-major order.  Operations compute eagerly; when
a Tape is active each operation appends a record (output, parents, backward
rule), so records are in topological order by construction and replaying them
in reverse propagates gradients to every reachable Parameter.

Precision is selected globally: float32 for training, float64 for gradient
and oracle suites (see `precision`).  Everything is single-threaded and
deterministic: the same seed and config produce bit-identical values and
gradients.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, NumericError, ShapeError

# ---------------------------------------------------------------------------
# global precision switch

_DEFAULT_DTYPE = np.float32


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"default dtype must be float32 or float64, got {dt}")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the global default dtype ("float32" / "float64")."""
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


# ---------------------------------------------------------------------------
# tensors and the tape


class Tensor:
    """A dense n-dimensional array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    # operator sugar; all routes through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Tensor):
    """A trainable tensor with a persistent gradient buffer and a stable id."""

    __slots__ = ("name", "grad")

    def __init__(self, data, name: str, dtype=None):
        super().__init__(data, dtype=dtype, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


_ACTIVE_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of operations; reverse replay yields gradients."""

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPES.pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor, wrt: Sequence[Tensor] = ()) -> dict:
        """Accumulate d(loss)/d(param) into every reachable Parameter's .grad.

        `loss` must be a scalar produced through operations recorded on this
        tape.  Returns a dict mapping each tensor in `wrt` to its gradient
        array (None if the loss does not depend on it).
        """
        if loss.size != 1:
            raise ContractError(
                f"backward requires a scalar loss, got shape {loss.shape}"
            )
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        keep = {id(t) for t in wrt}
        params: dict[int, Parameter] = {}
        for out, parents, rule in reversed(self._records):
            oid = id(out)
            if oid in keep:
                og = grads.get(oid)
            else:
                og = grads.pop(oid, None)
            if og is None:
                continue
            for parent, g in zip(parents, rule(og)):
                if g is None or not parent.requires_grad:
                    continue
                pid = id(parent)
                if pid in grads:
                    grads[pid] = grads[pid] + g
                else:
                    grads[pid] = g
                if isinstance(parent, Parameter):
                    params[pid] = parent
        for pid, p in params.items():
            p.grad += grads[pid]
        return {t: grads.get(id(t)) for t in wrt}


@contextlib.contextmanager
def no_grad():
    """Disable recording (forward evaluation only)."""
    _ACTIVE_TAPES.append(None)
    try:
        yield
    finally:
        _ACTIVE_TAPES.pop()


def _tape():
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def _emit(out: Tensor, parents: tuple, rule: Callable) -> None:
    out.requires_grad = True
    _ACTIVE_TAPES[-1]._records.append((out, parents, rule))


def _tracked(*parents) -> bool:
    """True if a tape is active and some parent wants gradients."""
    t = _tape()
    return t is not None and any(p.requires_grad for p in parents)


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else _DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum-reduce a broadcast gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and broadcasting ops


def add(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, like=a)
    out = Tensor(a.data + b.data)
    if _tracked(a, b):
        def rule(og):
            return _unbroadcast(og, a.shape), _unbroadcast(og, b.shape)

        _emit(out, (a, b), rule)
    return out


def sub(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, like=a)
    out = Tensor(a.data - b.data)
    if _tracked(a, b):
        def rule(og):
            return _unbroadcast(og, a.shape), _unbroadcast(-og, b.shape)

        _emit(out, (a, b), rule)
    return out


def mul(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, like=a)
    out = Tensor(a.data * b.data)
    if _tracked(a, b):
        def rule(og):
            return (
                _unbroadcast(og * b.data, a.shape),
                _unbroadcast(og * a.data, b.shape),
            )

        _emit(out, (a, b), rule)
    return out


def div(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, like=a)
    if np.any(b.data == 0):
        raise NumericError("division by exact zero")
    out = Tensor(a.data / b.data)
    if _tracked(a, b):
        def rule(og):
            return (
                _unbroadcast(og / b.data, a.shape),
                _unbroadcast(-og * a.data / (b.data * b.data), b.shape),
            )

        _emit(out, (a, b), rule)
    return out


def neg(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(-a.data)
    if _tracked(a):
        _emit(out, (a,), lambda og: (-og,))
    return out


def scale(a, s: float) -> Tensor:
    """Multiply by a python scalar (no broadcasting machinery)."""
    a = _wrap(a)
    out = Tensor(a.data * s)
    if _tracked(a):
        _emit(out, (a,), lambda og: (og * s,))
    return out


def texp(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.exp(a.data))
    if _tracked(a):
        _emit(out, (a,), lambda og: (og * out.data,))
    return out


def tlog(a) -> Tensor:
    a = _wrap(a)
    if np.any(a.data <= 0):
        raise NumericError("log of a non-positive value")
    out = Tensor(np.log(a.data))
    if _tracked(a):
        _emit(out, (a,), lambda og: (og / a.data,))
    return out


def tsqrt(a) -> Tensor:
    a = _wrap(a)
    if np.any(a.data < 0):
        raise NumericError("sqrt of a negative value")
    out = Tensor(np.sqrt(a.data))
    if _tracked(a):
        _emit(out, (a,), lambda og: (og * 0.5 / out.data,))
    return out


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))
    out = Tensor(out_data.astype(x.dtype, copy=False))
    if _tracked(a):
        _emit(out, (a,), lambda og: (og * out.data * (1.0 - out.data),))
    return out


def silu(a) -> Tensor:
    a = _wrap(a)
    s = sigmoid_raw(a.data)
    out = Tensor(a.data * s)
    if _tracked(a):
        # d/dx x*sig(x) = sig(x) * (1 + x * (1 - sig(x)))
        def rule(og):
            return (og * (s * (1.0 + a.data * (1.0 - s))),)

        _emit(out, (a,), rule)
    return out


def sigmoid_raw(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x))).astype(
        x.dtype, copy=False
    )


def relu(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.maximum(a.data, 0.0))
    if _tracked(a):
        _emit(out, (a,), lambda og: (og * (a.data > 0),))
    return out


def tabs(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.abs(a.data))
    if _tracked(a):
        _emit(out, (a,), lambda og: (og * np.sign(a.data),))
    return out


def maximum(a, b) -> Tensor:
    """Elementwise max; gradient follows the winning operand (ties go to a)."""
    a = _wrap(a)
    b = _wrap(b, like=a)
    out = Tensor(np.maximum(a.data, b.data))
    if _tracked(a, b):
        def rule(og):
            take_a = a.data >= b.data
            return (
                _unbroadcast(og * take_a, a.shape),
                _unbroadcast(og * ~take_a, b.shape),
            )

        _emit(out, (a, b), rule)
    return out


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))
    if _tracked(a):
        def rule(og):
            g = og
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        _emit(out, (a,), rule)
    return out


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = 1
        for ax in axes:
            n *= a.shape[ax]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.reshape(shape))
    if _tracked(a):
        _emit(out, (a,), lambda og: (og.reshape(a.shape),))
    return out


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    axes = tuple(axes)
    out = Tensor(a.data.transpose(axes))
    if _tracked(a):
        inv = tuple(np.argsort(axes))
        _emit(out, (a,), lambda og: (og.transpose(inv),))
    return out


def flip(a, axis: int) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.flip(a.data, axis=axis).copy())
    if _tracked(a):
        _emit(out, (a,), lambda og: (np.flip(og, axis=axis),))
    return out


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    if _tracked(*parts):
        sizes = [p.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def rule(og):
            sl = [slice(None)] * og.ndim
            gs = []
            for i in range(len(parts)):
                sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
                gs.append(og[tuple(sl)])
            return tuple(gs)

        _emit(out, tuple(parts), rule)
    return out


def take_row(a, index: int) -> Tensor:
    """a[index] along the first axis."""
    a = _wrap(a)
    out = Tensor(a.data[index])
    if _tracked(a):
        def rule(og):
            g = np.zeros_like(a.data)
            g[index] = og
            return (g,)

        _emit(out, (a,), rule)
    return out


def slice_cols(a, start: int, stop: int) -> Tensor:
    """a[:, start:stop] for a 2-d tensor."""
    a = _wrap(a)
    out = Tensor(a.data[:, start:stop].copy())
    if _tracked(a):
        def rule(og):
            g = np.zeros_like(a.data)
            g[:, start:stop] = og
            return (g,)

        _emit(out, (a,), rule)
    return out


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    rows = [_wrap(r) for r in rows]
    out = Tensor(np.stack([r.data for r in rows], axis=0))
    if _tracked(*rows):
        def rule(og):
            return tuple(og[i] for i in range(len(rows)))

        _emit(out, tuple(rows), rule)
    return out


# ---------------------------------------------------------------------------
# matmul


def matmul(a, b) -> Tensor:
    """Matrix product with numpy stacking semantics on leading axes."""
    a = _wrap(a)
    b = _wrap(b, like=a)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul requires 2-d or stacked operands, got {a.shape} @ {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    if _tracked(a, b):
        def rule(og):
            ga = og @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ og
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        _emit(out, (a, b), rule)
    return out


# ---------------------------------------------------------------------------
# normalization / softmax


def softmax_channel(a) -> Tensor:
    """Softmax over axis 0 (the class axis), max-subtracted for stability."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=0, keepdims=True)
    out = Tensor(s)
    if _tracked(a):
        def rule(og):
            dot = (og * s).sum(axis=0, keepdims=True)
            return (s * (og - dot),)

        _emit(out, (a,), rule)
    return out


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    a = _wrap(a)
    mu = tmean(a, axis=-1, keepdims=True)
    centered = sub(a, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    inv = div(centered, tsqrt(add(var, _wrap(eps, like=a))))
    return add(mul(inv, gain), bias)


# ---------------------------------------------------------------------------
# convolution (cross-correlation, channels-first, 2-d or 3-d spatial)

_COL_INDEX_CACHE: dict = {}


def _as_tuple(v, rank: int, name: str) -> tuple:
    if isinstance(v, int):
        return (v,) * rank
    t = tuple(int(x) for x in v)
    if len(t) != rank:
        raise ShapeError(f"{name} must have {rank} entries, got {t}")
    return t


def _conv_geometry(x_shape, w_shape, stride, pad):
    c_in, *spatial = x_shape
    c_out, c_in_w, *kernel = w_shape
    rank = len(spatial)
    if rank not in (2, 3):
        raise ShapeError(f"conv supports 2-d or 3-d spatial inputs, got {x_shape}")
    if len(kernel) != rank:
        raise ShapeError(
            f"kernel rank {len(kernel)} does not match spatial rank {rank}: "
            f"input {x_shape}, weight {w_shape}"
        )
    if c_in_w != c_in:
        raise ShapeError(
            f"weight expects {c_in_w} input channels, input has {c_in}: "
            f"input {x_shape}, weight {w_shape}"
        )
    stride = _as_tuple(stride, rank, "stride")
    pad = _as_tuple(pad, rank, "pad")
    out_spatial = []
    for s, k, st, p in zip(spatial, kernel, stride, pad):
        o = (s + 2 * p - k) // st + 1
        if o < 1 or s + 2 * p < k:
            raise ShapeError(
                f"non-positive output extent for spatial {spatial}, kernel "
                f"{kernel}, stride {stride}, pad {pad}"
            )
        out_spatial.append(o)
    return c_in, c_out, tuple(spatial), tuple(kernel), stride, pad, tuple(out_spatial)


def _im2col(xp: np.ndarray, kernel, stride, out_spatial) -> np.ndarray:
    """(C_in * prod(kernel), prod(out_spatial)) patch matrix of padded input."""
    rank = len(kernel)
    win = sliding_window_view(xp, kernel, axis=tuple(range(1, rank + 1)))
    sl = (slice(None),) + tuple(slice(None, None, s) for s in stride)
    win = win[sl]
    # axes currently (C, o..., k...); put kernel right after channel
    perm = (0,) + tuple(range(1 + rank, 1 + 2 * rank)) + tuple(range(1, 1 + rank))
    win = win.transpose(perm)
    c_in = xp.shape[0]
    return np.ascontiguousarray(win).reshape(
        c_in * int(np.prod(kernel)), int(np.prod(out_spatial))
    )


def _col_indices(xp_shape, kernel, stride, out_spatial) -> np.ndarray:
    """Flat padded-input index for every entry of the im2col matrix."""
    key = (xp_shape, kernel, stride)
    cached = _COL_INDEX_CACHE.get(key)
    if cached is None:
        base = np.arange(int(np.prod(xp_shape)), dtype=np.int64).reshape(xp_shape)
        cached = _im2col(base, kernel, stride, out_spatial)
        if len(_COL_INDEX_CACHE) > 64:
            _COL_INDEX_CACHE.clear()
        _COL_INDEX_CACHE[key] = cached
    return cached


def conv_nd(x, w, b=None, stride=1, pad=0) -> Tensor:
    """Cross-correlation of a channels-first input with an optional bias.

    x: (C_in, *spatial), w: (C_out, C_in, *kernel), b: (C_out,) or None.
    Output extents are floor((S + 2*pad - K)/stride) + 1.
    """
    x = _wrap(x)
    w = _wrap(w, like=x)
    if b is not None:
        b = _wrap(b, like=x)
    c_in, c_out, spatial, kernel, stride, pad, out_spatial = _conv_geometry(
        x.shape, w.shape, stride, pad
    )
    pad_width = ((0, 0),) + tuple((p, p) for p in pad)
    xp = np.pad(x.data, pad_width) if any(pad) else x.data
    cols = _im2col(xp, kernel, stride, out_spatial)
    y = w.data.reshape(c_out, -1) @ cols
    if b is not None:
        y = y + b.data[:, None]
    out = Tensor(y.reshape((c_out,) + out_spatial))
    parents = (x, w) if b is None else (x, w, b)
    if _tracked(*parents):
        xp_shape = xp.shape

        def rule(og):
            og2 = og.reshape(c_out, -1)
            cols_b = _im2col(
                np.pad(x.data, pad_width) if any(pad) else x.data,
                kernel,
                stride,
                out_spatial,
            )
            gw = (og2 @ cols_b.T).reshape(w.shape)
            gx = None
            if x.requires_grad:
                dcols = w.data.reshape(c_out, -1).T @ og2
                idx = _col_indices(xp_shape, kernel, stride, out_spatial)
                flat = np.bincount(
                    idx.ravel(),
                    weights=dcols.ravel().astype(np.float64, copy=False),
                    minlength=int(np.prod(xp_shape)),
                )
                gxp = flat.reshape(xp_shape).astype(x.dtype, copy=False)
                if any(pad):
                    core = (slice(None),) + tuple(
                        slice(p, p + s) for p, s in zip(pad, spatial)
                    )
                    gx = np.ascontiguousarray(gxp[core])
                else:
                    gx = gxp
            if b is None:
                return gx, gw
            return gx, gw, og2.sum(axis=1)

        _emit(out, parents, rule)
    return out


# ---------------------------------------------------------------------------
# x2 linear upsampling (bilinear / trilinear, align_corners=False)

_INTERP_CACHE: dict = {}


def _interp_matrix(n: int, dtype) -> np.ndarray:
    key = (n, np.dtype(dtype).str)
    m = _INTERP_CACHE.get(key)
    if m is None:
        m = np.zeros((2 * n, n), dtype=dtype)
        for i in range(2 * n):
            src = (i + 0.5) / 2.0 - 0.5
            j0 = math.floor(src)
            frac = src - j0
            j0c = min(max(j0, 0), n - 1)
            j1c = min(max(j0 + 1, 0), n - 1)
            m[i, j0c] += 1.0 - frac
            m[i, j1c] += frac
        _INTERP_CACHE[key] = m
    return m


def _apply_axis(a: np.ndarray, m: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(a, axis, -1)
    return np.moveaxis(moved @ m.T, -1, axis)


def upsample_linear(x, factor: int = 2) -> Tensor:
    """Double every spatial extent of a (C, *spatial) tensor by interpolation."""
    if factor != 2:
        raise ConfigError(f"upsample_linear supports factor 2 only, got {factor}")
    x = _wrap(x)
    rank = x.ndim - 1
    if rank not in (2, 3):
        raise ShapeError(f"upsample expects 2-d or 3-d spatial input, got {x.shape}")
    mats = [_interp_matrix(x.shape[1 + ax], x.dtype) for ax in range(rank)]
    y = x.data
    for ax in range(rank):
        y = _apply_axis(y, mats[ax], 1 + ax)
    out = Tensor(np.ascontiguousarray(y))
    if _tracked(x):
        def rule(og):
            g = og
            for ax in reversed(range(rank)):
                g = _apply_axis(g, mats[ax].T, 1 + ax)
            return (np.ascontiguousarray(g),)

        _emit(out, (x,), rule)
    return out


# ---------------------------------------------------------------------------
# non-overlapping 2x max pooling (alternative downsampler)


def max_pool2(x) -> Tensor:
    """Halve every spatial extent by taking the max of each 2^d window."""
    x = _wrap(x)
    rank = x.ndim - 1
    if rank not in (2, 3):
        raise ShapeError(f"max_pool2 expects 2-d or 3-d spatial input, got {x.shape}")
    if any(s % 2 for s in x.shape[1:]):
        raise ShapeError(f"max_pool2 requires even spatial extents, got {x.shape}")
    c = x.shape[0]
    halves = tuple(s // 2 for s in x.shape[1:])
    newshape = (c,) + tuple(v for h in halves for v in (h, 2))
    r = x.data.reshape(newshape)
    win_axes = tuple(2 + 2 * i for i in range(rank))
    pooled = r.max(axis=win_axes)
    out = Tensor(pooled)
    if _tracked(x):
        def rule(og):
            expanded = np.expand_dims(pooled, win_axes)
            mask = r == expanded
            count = mask.sum(axis=win_axes, keepdims=True)
            g = np.expand_dims(og, win_axes) * mask / count
            return (g.reshape(x.shape).astype(x.dtype, copy=False),)

        _emit(out, (x,), rule)
    return out


# ---------------------------------------------------------------------------
# depthwise causal 1-d convolution over the token axis


def causal_conv1d(x, w, b) -> Tensor:
    """Depthwise causal convolution: out[t] = b + sum_k w[k] * x[t - (K-1) + k].

    x: (N, D); w: (K, D); b: (D,).  Left zero padding of K-1 rows makes each
    output depend only on the current and previous K-1 tokens.
    """
    x = _wrap(x)
    w = _wrap(w, like=x)
    b = _wrap(b, like=x)
    n, d = x.shape
    k = w.shape[0]
    if w.shape != (k, d) or b.shape != (d,):
        raise ShapeError(
            f"causal_conv1d weight/bias mismatch: x {x.shape}, w {w.shape}, b {b.shape}"
        )
    xp = np.concatenate([np.zeros((k - 1, d), dtype=x.dtype), x.data], axis=0)
    y = np.zeros_like(x.data)
    for j in range(k):
        y += w.data[j] * xp[j : j + n]
    y = y + b.data
    out = Tensor(y)
    if _tracked(x, w, b):
        def rule(og):
            gx = np.zeros_like(x.data)
            gw = np.zeros_like(w.data)
            # tap j reads xp[j:j+n] = x[t - (k-1) + j]
            for j in range(k):
                shift = (k - 1) - j
                if shift == 0:
                    gx += og * w.data[j]
                    gw[j] = (og * x.data).sum(axis=0)
                elif shift < n:
                    gx[: n - shift] += og[shift:] * w.data[j]
                    gw[j] = (og[shift:] * x.data[: n - shift]).sum(axis=0)
                # taps falling entirely in the zero padding contribute nothing
            return gx, gw, og.sum(axis=0)

        _emit(out, (x, w, b), rule)
    return out


__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "no_grad",
    "precision",
    "set_default_dtype",
    "default_dtype",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "scale",
    "texp",
    "tlog",
    "tsqrt",
    "sigmoid",
    "sigmoid_raw",
    "silu",
    "relu",
    "tabs",
    "maximum",
    "tsum",
    "tmean",
    "reshape",
    "transpose",
    "flip",
    "concat",
    "take_row",
    "slice_cols",
    "stack_rows",
    "matmul",
    "softmax_channel",
    "layer_norm",
    "conv_nd",
    "upsample_linear",
    "max_pool2",
    "causal_conv1d",
]
