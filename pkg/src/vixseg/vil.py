"""Patch embedding and the bidirectional mLSTM token-mixer stack.

Tokens are raster-ordered (top-left to bottom-right, depth-major in 3-d).
Each block: pre-norm -> up-projection into a recurrent branch and a gate
branch (both 2Z wide) -> depthwise causal conv + SiLU -> matrix-memory scan
-> readout gated by silu(gate branch) -> down-projection -> residual.

The scan keeps a matrix cell state C (heads x d x d), a normalizer state eta
(heads x 1 x d) and a running log-domain stabilizer m (heads,), so its memory
footprint is independent of the token count.  Even-indexed blocks scan in
raster order, odd-indexed blocks scan the reversed sequence; reversal is a
flip around the whole conv+scan path, which makes a reverse block exactly
flip o forward-block o flip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import NumericError, ShapeError
from .tensor import (
    Parameter,
    Tensor,
    add,
    causal_conv1d,
    conv_nd,
    div,
    flip,
    layer_norm,
    matmul,
    maximum,
    mul,
    reshape,
    scale,
    sigmoid,
    silu,
    slice_cols,
    stack_rows,
    sub,
    take_row,
    tabs,
    texp,
    transpose,
)

CAUSAL_CONV_WIDTH = 4


# ---------------------------------------------------------------------------
# patch embedding


@dataclass
class PatchEmbedConfig:
    patch_size: int
    channels: int
    spatial: tuple
    embed_dim: int

    @property
    def rank(self) -> int:
        return len(self.spatial)

    @property
    def grid(self) -> tuple:
        return tuple(s // self.patch_size for s in self.spatial)

    @property
    def num_tokens(self) -> int:
        return int(np.prod(self.grid))

    @property
    def token_dim(self) -> int:
        return self.channels * self.patch_size ** self.rank


def patchify_and_embed(r, cfg: PatchEmbedConfig, k_proj, k_pos, path: str = "conv"):
    """Tokenize a (C, *spatial) feature map: (N, Z) = patches @ K + K_pos.

    Patches are non-overlapping P^d blocks flattened with the channel axis
    fastest, enumerated in raster order.  The default path realizes the
    projection as a stride-P convolution; path="gather" uses an explicit
    reshape-and-matmul, kept as the equivalence reference.
    """
    p = cfg.patch_size
    for ax, s in enumerate(r.shape[1:]):
        if s % p:
            raise ShapeError(
                f"spatial axis {ax} extent {s} is not divisible by patch size {p}"
            )
    c = r.shape[0]
    rank = r.ndim - 1
    z = cfg.embed_dim
    n = cfg.num_tokens
    if path == "conv":
        # K rows are ordered (patch raster position, channel); a stride-P conv
        # wants (Z, C, *P): put channel before the patch axes, Z first.
        k_grid = reshape(k_proj, (p,) * rank + (c, z))
        perm = (rank + 1, rank) + tuple(range(rank))
        w = transpose(k_grid, perm)
        y = conv_nd(r, w, b=None, stride=p, pad=0)           # (Z, *grid)
        tokens = transpose(reshape(y, (z, n)), (1, 0))        # (N, Z)
    elif path == "gather":
        # (C, g0*P, g1*P[, g2*P]) -> (N, P^d * C) with channel fastest
        split_shape = (c,) + tuple(v for g in cfg.grid for v in (g, p))
        x = reshape(r, split_shape)
        grid_axes = tuple(1 + 2 * i for i in range(rank))
        patch_axes = tuple(2 + 2 * i for i in range(rank))
        x = transpose(x, grid_axes + patch_axes + (0,))
        tokens = matmul(reshape(x, (n, cfg.token_dim)), k_proj)
    else:
        raise ValueError(f"unknown patchify path {path!r}")
    return add(tokens, k_pos)


def tokens_to_grid(tokens, cfg: PatchEmbedConfig):
    """Inverse raster: (N, Z) tokens back to a (Z, *grid) map."""
    z = cfg.embed_dim
    return reshape(transpose(tokens, (1, 0)), (z,) + cfg.grid)


# ---------------------------------------------------------------------------
# block parameters


@dataclass
class VilBlockParams:
    """All learnable tensors of one block; embed_dim Z, inner width 2Z."""

    norm_gain: Parameter
    norm_bias: Parameter
    up_w: Parameter      # (Z, 4Z): both branches in one projection
    up_b: Parameter
    conv_w: Parameter    # (width, 2Z) depthwise causal kernel
    conv_b: Parameter
    q_w: Parameter       # (2Z, 2Z)
    k_w: Parameter
    v_w: Parameter
    ig_w: Parameter      # (2Z, heads): one input-gate unit per head
    ig_b: Parameter
    fg_w: Parameter      # (2Z, heads)
    fg_b: Parameter
    og_w: Parameter      # (2Z, 2Z) elementwise output gate
    og_b: Parameter
    down_w: Parameter    # (2Z, Z)
    down_b: Parameter
    heads: int = 4

    def parameters(self) -> list[Parameter]:
        return [getattr(self, f.name) for f in fields(self) if f.name != "heads"]


def init_vil_block(embed_dim: int, heads: int, block_index: int, rng, init) -> VilBlockParams:
    """Build one block's parameters with ids "vil.{block}.{name}"."""
    z = embed_dim
    d2 = 2 * z
    if d2 % heads:
        raise ShapeError(f"heads {heads} must divide inner width {d2}")
    pre = f"vil.{block_index}"

    def w(name, shape, fan_in):
        return Parameter(init(shape, fan_in, rng), f"{pre}.{name}")

    def zeros(name, shape):
        return Parameter(np.zeros(shape), f"{pre}.{name}")

    return VilBlockParams(
        norm_gain=Parameter(np.ones(z), f"{pre}.norm.gain"),
        norm_bias=zeros("norm.bias", (z,)),
        up_w=w("up.w", (z, 4 * z), z),
        up_b=zeros("up.b", (4 * z,)),
        conv_w=w("conv.w", (CAUSAL_CONV_WIDTH, d2), CAUSAL_CONV_WIDTH),
        conv_b=zeros("conv.b", (d2,)),
        q_w=w("q.w", (d2, d2), d2),
        k_w=w("k.w", (d2, d2), d2),
        v_w=w("v.w", (d2, d2), d2),
        ig_w=w("ig.w", (d2, heads), d2),
        ig_b=zeros("ig.b", (heads,)),
        fg_w=w("fg.w", (d2, heads), d2),
        # retention bias: early training favors keeping past context
        fg_b=Parameter(np.linspace(3.0, 6.0, heads), f"{pre}.fg.b"),
        og_w=w("og.w", (d2, d2), d2),
        og_b=zeros("og.b", (d2,)),
        down_w=w("down.w", (d2, z), d2),
        down_b=zeros("down.b", (z,)),
        heads=heads,
    )


# ---------------------------------------------------------------------------
# the scan


def mlstm_recurrence(q, k, v, i_pre, f_pre, heads: int):
    """Matrix-memory scan over pre-projected tokens.

    q, k, v: (N, D) with k already scaled by d_head^-1/2; i_pre, f_pre: (N, H)
    scalar-per-head gate pre-activations.  Returns the (N, D) readout before
    the output gate.

    Per token t (all exponentials in the stabilized log domain, which cancels
    exactly in the readout):

        m_t = max(f_t + m_{t-1}, i_t)
        i'  = exp(i_t - m_t);  f' = exp(f_t + m_{t-1} - m_t)
        C_t = f' C_{t-1} + i' v_t k_t^T
        n_t = f' n_{t-1} + i' k_t
        h_t = C_t q_t / max(|n_t . q_t|, exp(-m_t))
    """
    n, dim = q.shape
    if dim % heads:
        raise ShapeError(f"heads {heads} must divide feature width {dim}")
    d = dim // heads
    dt = q.data.dtype
    c_state = Tensor(np.zeros((heads, d, d), dtype=dt))
    eta = Tensor(np.zeros((heads, 1, d), dtype=dt))
    m_state = np.full(heads, -np.inf)  # detached stabilizer
    rows = []
    # overflow/invalid intermediates are caught by the explicit finiteness
    # check below and reported with the offending token index
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n):
            qt = reshape(take_row(q, t), (heads, d, 1))
            kt = reshape(take_row(k, t), (heads, 1, d))
            vt = reshape(take_row(v, t), (heads, d, 1))
            it = take_row(i_pre, t)  # (H,)
            ft = take_row(f_pre, t)
            m_new = np.maximum(ft.data + m_state, it.data)
            i_act = texp(sub(it, Tensor(m_new.astype(dt))))
            f_act = texp(add(ft, Tensor((m_state - m_new).astype(dt))))
            i3 = reshape(i_act, (heads, 1, 1))
            f3 = reshape(f_act, (heads, 1, 1))
            c_state = add(mul(f3, c_state), mul(i3, matmul(vt, kt)))
            eta = add(mul(f3, eta), mul(i3, kt))
            num = matmul(c_state, qt)                      # (H, d, 1)
            dot = matmul(eta, qt)                          # (H, 1, 1)
            # exp(-m) can underflow once the running max grows (long spans of
            # high forget gates); the unstabilized denominator max(|eta.q|, 1)
            # is never zero, so keep its scaled image strictly positive too
            floor_val = np.maximum(np.exp(-m_new), np.finfo(dt).tiny)
            floor = Tensor(floor_val.astype(dt).reshape(heads, 1, 1))
            h = div(num, maximum(tabs(dot), floor))
            if not (
                np.isfinite(c_state.data).all()
                and np.isfinite(eta.data).all()
                and np.isfinite(h.data).all()
            ):
                raise NumericError(f"non-finite recurrent state at token {t}")
            rows.append(reshape(h, (dim,)))
            m_state = m_new
    return stack_rows(rows)


def mlstm_state_nbytes(embed_dim: int, heads: int, itemsize: int = 4) -> int:
    """Recurrent state size in bytes: C + eta + m, independent of token count."""
    d = 2 * embed_dim // heads
    return (heads * d * d + heads * d + heads) * itemsize


def mlstm_scan(x, params: VilBlockParams, direction: str = "forward"):
    """Full mixer on a (N, 2Z) sequence: q/k/v and gates from x, scan, o-gate."""
    if direction == "reverse":
        return flip(mlstm_scan(flip(x, 0), params, "forward"), 0)
    if direction != "forward":
        raise ValueError(f"unknown direction {direction!r}")
    heads = params.heads
    d = x.shape[1] // heads
    q = matmul(x, params.q_w)
    k = scale(matmul(x, params.k_w), 1.0 / math.sqrt(d))
    v = matmul(x, params.v_w)
    i_pre = add(matmul(x, params.ig_w), params.ig_b)
    f_pre = add(matmul(x, params.fg_w), params.fg_b)
    h = mlstm_recurrence(q, k, v, i_pre, f_pre, heads)
    o = sigmoid(add(matmul(x, params.og_w), params.og_b))
    return mul(o, h)


def causal_conv_silu(x, params: VilBlockParams):
    """Depthwise width-4 causal convolution followed by SiLU."""
    return silu(causal_conv1d(x, params.conv_w, params.conv_b))


# ---------------------------------------------------------------------------
# blocks and the stack


def vil_block_forward(p, params: VilBlockParams, block_index: int, residual: bool = True):
    """One token-mixing block; odd block indices process the reversed sequence."""
    z = p.shape[1]
    h = layer_norm(p, params.norm_gain, params.norm_bias)
    u = add(matmul(h, params.up_w), params.up_b)
    x_m = slice_cols(u, 0, 2 * z)
    y = slice_cols(u, 2 * z, 4 * z)
    reverse = block_index % 2 == 1
    if reverse:
        x_m = flip(x_m, 0)
    hseq = mlstm_scan(causal_conv_silu(x_m, params), params, "forward")
    if reverse:
        hseq = flip(hseq, 0)
    gated = mul(hseq, silu(y))
    out = add(matmul(gated, params.down_w), params.down_b)
    if residual:
        out = add(out, p)
    return out


def vil_stack_forward(p, blocks: list[VilBlockParams], residual: bool = True):
    for i, blk in enumerate(blocks):
        p = vil_block_forward(p, blk, i, residual=residual)
    return p


# ---------------------------------------------------------------------------
# analytic FLOP count (multiply+add = 2 ops; exactly linear in token count)


def mlstm_scan_flops(n_tokens: int, embed_dim: int, heads: int) -> int:
    d2 = 2 * embed_dim
    d = d2 // heads
    per_token = 0
    per_token += 3 * 2 * d2 * d2          # q/k/v projections
    per_token += d2                        # key scaling
    per_token += 2 * 2 * d2 * heads + 2 * heads   # gate projections + bias
    per_token += 2 * d2 * d2 + 2 * d2      # output gate projection + sigmoid (approx 1/elt)
    per_token += 4 * heads                 # stabilizer bookkeeping
    per_token += 2 * heads * d * d         # v k^T outer products
    per_token += 4 * heads * d * d         # C update (two scales, one add)
    per_token += 4 * heads * d             # eta update
    per_token += 2 * heads * d * d         # C q readout
    per_token += 2 * heads * d + heads     # eta . q and denominator
    per_token += heads * d                 # divide
    per_token += d2                        # output gating
    return per_token * n_tokens
