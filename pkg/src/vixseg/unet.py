"""The U-shaped network: conv feature extraction, token-mixer bottleneck,
conv reconstruction with skip connections.  2-d and 3-d variants.

Per encoder level: two 3^d convs (pad 1) + ReLU; a stride-2 conv (or max
pool) halves extents between levels, so level l features have extents
input/2^(l-1) and channels C*2^(l-1).  The deepest map is tokenized,
mixed by the bidirectional block stack, restored to the bottleneck grid
(inverse raster reshape, 1x1 conv to bottleneck channels, x2 upsampling
per factor of patch size), then decoded level by level: upsample, channel
concat with the same-level encoder map, two convs reducing to that level's
channel count.  A 1x1 head plus channel softmax yields per-class maps the
same size as the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import derive_rng, truncated_normal
from .tensor import (
    Parameter,
    Tensor,
    concat,
    conv_nd,
    max_pool2,
    relu,
    softmax_channel,
    upsample_linear,
)
from .vil import (
    PatchEmbedConfig,
    VilBlockParams,
    init_vil_block,
    mlstm_scan_flops,
    patchify_and_embed,
    tokens_to_grid,
    vil_stack_forward,
)


@dataclass
class ModelConfig:
    spatial_rank: int = 2
    levels: int = 4
    base_channels: int = 16
    patch_size: int = 2
    embed_dim: int = 64
    vil_blocks: int = 6
    num_classes: int = 2
    heads: int = 4
    residual_vil: bool = True
    downsample: str = "conv"      # "conv" (stride-2) or "maxpool"
    init: str = "fanin"           # "fanin" or "small" (Normal(0, 0.02))

    def validate(self) -> None:
        if self.spatial_rank not in (2, 3):
            raise ConfigError(f"spatial_rank must be 2 or 3, got {self.spatial_rank}")
        if self.levels < 2:
            raise ConfigError(f"levels must be >= 2, got {self.levels}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.patch_size < 1 or self.patch_size & (self.patch_size - 1):
            raise ConfigError(
                f"patch_size must be a power of two, got {self.patch_size}"
            )
        if (2 * self.embed_dim) % self.heads:
            raise ConfigError(
                f"heads ({self.heads}) must divide 2*embed_dim ({2 * self.embed_dim})"
            )
        if self.downsample not in ("conv", "maxpool"):
            raise ConfigError(f"unknown downsample {self.downsample!r}")
        if self.init not in ("fanin", "small"):
            raise ConfigError(f"unknown init {self.init!r}")

    @property
    def divisor(self) -> int:
        """Input extents must be divisible by 2^(levels-1) * patch_size."""
        return 2 ** (self.levels - 1) * self.patch_size

    def channels_at(self, level: int) -> int:
        return self.base_channels * 2 ** (level - 1)


def _make_init(kind: str):
    if kind == "small":
        def init(shape, fan_in, rng):
            return truncated_normal(rng, 0.02, shape)
    else:
        def init(shape, fan_in, rng):
            return truncated_normal(rng, math.sqrt(2.0 / fan_in), shape)
    return init


class VilUNet:
    """Trainable model; all parameters carry stable string ids."""

    def __init__(self, cfg: ModelConfig, input_extents, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        self.input_extents = tuple(int(e) for e in input_extents)
        if len(self.input_extents) != cfg.spatial_rank:
            raise ConfigError(
                f"input extents {self.input_extents} do not match spatial_rank "
                f"{cfg.spatial_rank}"
            )
        for e in self.input_extents:
            if e % cfg.divisor:
                raise ConfigError(
                    f"input extents {self.input_extents} must be divisible by "
                    f"{cfg.divisor} (2^(levels-1) * patch_size)"
                )
        bottleneck = tuple(e // 2 ** (cfg.levels - 1) for e in self.input_extents)
        self.embed_cfg = PatchEmbedConfig(
            patch_size=cfg.patch_size,
            channels=cfg.channels_at(cfg.levels),
            spatial=bottleneck,
            embed_dim=cfg.embed_dim,
        )
        self._params: dict[str, Parameter] = {}
        self._build(derive_rng(seed, "init"))

    # -- construction ------------------------------------------------------

    def _add(self, p: Parameter) -> Parameter:
        if p.name in self._params:
            raise ConfigError(f"duplicate parameter id {p.name!r}")
        self._params[p.name] = p
        return p

    def _conv_pair(self, prefix, c_in, c_out, rng, init, kernel):
        rank = self.cfg.spatial_rank
        kshape = (kernel,) * rank
        fan = c_in * kernel ** rank
        w1 = self._add(Parameter(init((c_out, c_in) + kshape, fan, rng), f"{prefix}.conv1.w"))
        b1 = self._add(Parameter(np.zeros(c_out), f"{prefix}.conv1.b"))
        fan2 = c_out * kernel ** rank
        w2 = self._add(Parameter(init((c_out, c_out) + kshape, fan2, rng), f"{prefix}.conv2.w"))
        b2 = self._add(Parameter(np.zeros(c_out), f"{prefix}.conv2.b"))
        return (w1, b1, w2, b2)

    def _build(self, rng) -> None:
        cfg = self.cfg
        init = _make_init(cfg.init)
        rank = cfg.spatial_rank
        self.enc = []
        self.down = []
        c_prev = 1
        for l in range(1, cfg.levels + 1):
            c = cfg.channels_at(l)
            self.enc.append(self._conv_pair(f"enc.{l}", c_prev, c, rng, init, 3))
            if l < cfg.levels:
                if cfg.downsample == "conv":
                    kshape = (2,) * rank
                    w = self._add(
                        Parameter(init((c, c) + kshape, c * 2 ** rank, rng), f"enc.{l}.down.w")
                    )
                    b = self._add(Parameter(np.zeros(c), f"enc.{l}.down.b"))
                    self.down.append((w, b))
                else:
                    self.down.append(None)
            c_prev = c

        ec = self.embed_cfg
        self.embed_k = self._add(
            Parameter(init((ec.token_dim, cfg.embed_dim), ec.token_dim, rng), "embed.k")
        )
        self.embed_pos = self._add(
            Parameter(np.zeros((ec.num_tokens, cfg.embed_dim)), "embed.pos")
        )
        self.blocks: list[VilBlockParams] = []
        for i in range(cfg.vil_blocks):
            blk = init_vil_block(cfg.embed_dim, cfg.heads, i, rng, init)
            for p in blk.parameters():
                self._add(p)
            self.blocks.append(blk)

        c_bot = cfg.channels_at(cfg.levels)
        one = (1,) * rank
        self.restore_w = self._add(
            Parameter(init((c_bot, cfg.embed_dim) + one, cfg.embed_dim, rng), "restore.w")
        )
        self.restore_b = self._add(Parameter(np.zeros(c_bot), "restore.b"))

        self.dec = {}
        for l in range(cfg.levels - 1, 0, -1):
            c_skip = cfg.channels_at(l)
            c_up = cfg.channels_at(l + 1)
            self.dec[l] = self._conv_pair(f"dec.{l}", c_up + c_skip, c_skip, rng, init, 3)

        c1 = cfg.channels_at(1)
        self.head_w = self._add(
            Parameter(init((cfg.num_classes, c1) + one, c1, rng), "head.w")
        )
        self.head_b = self._add(Parameter(np.zeros(cfg.num_classes), "head.b"))

    # -- access ------------------------------------------------------------

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def param_dict(self) -> dict[str, Parameter]:
        return dict(self._params)

    def num_parameters(self) -> int:
        return sum(p.size for p in self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self._params.items():
            if name not in arrays:
                raise ConfigError(f"checkpoint is missing parameter {name!r}")
            a = arrays[name]
            if tuple(a.shape) != p.shape:
                raise ConfigError(
                    f"checkpoint shape {tuple(a.shape)} for {name!r} does not "
                    f"match model shape {p.shape}"
                )
            p.data = np.ascontiguousarray(a, dtype=p.data.dtype)

    # -- forward -----------------------------------------------------------

    def encoder_forward(self, image):
        """Returns (deepest map, per-level trace for skip connections)."""
        if image.shape[0] != 1 or image.shape[1:] != self.input_extents:
            raise ShapeError(
                f"expected input of shape (1, {', '.join(map(str, self.input_extents))}), "
                f"got {image.shape}"
            )
        x = image
        trace = []
        for l in range(1, self.cfg.levels + 1):
            w1, b1, w2, b2 = self.enc[l - 1]
            x = relu(conv_nd(x, w1, b1, stride=1, pad=1))
            x = relu(conv_nd(x, w2, b2, stride=1, pad=1))
            trace.append(x)
            if l < self.cfg.levels:
                if self.cfg.downsample == "conv":
                    w, b = self.down[l - 1]
                    x = conv_nd(x, w, b, stride=2, pad=0)
                else:
                    x = max_pool2(x)
        return trace[-1], trace

    def decoder_level(self, f_next, e_skip, level: int):
        """Upsample, concat the skip (upsampled half first), two convs + ReLU."""
        u = upsample_linear(f_next)
        if u.shape[1:] != e_skip.shape[1:]:
            raise ShapeError(
                f"decoder level {level}: upsampled extents {u.shape[1:]} do not "
                f"match skip extents {e_skip.shape[1:]}"
            )
        w1, b1, w2, b2 = self.dec[level]
        x = concat([u, e_skip], axis=0)
        x = relu(conv_nd(x, w1, b1, stride=1, pad=1))
        return relu(conv_nd(x, w2, b2, stride=1, pad=1))

    def forward(self, image, return_logits: bool = False):
        """Image (1, *extents) in [0,1] -> per-class maps (classes, *extents)."""
        image = image if isinstance(image, Tensor) else Tensor(image)
        r, trace = self.encoder_forward(image)
        tokens = patchify_and_embed(r, self.embed_cfg, self.embed_k, self.embed_pos)
        tokens = vil_stack_forward(tokens, self.blocks, residual=self.cfg.residual_vil)
        g = tokens_to_grid(tokens, self.embed_cfg)
        g = conv_nd(g, self.restore_w, self.restore_b, stride=1, pad=0)
        for _ in range(int(math.log2(self.cfg.patch_size))):
            g = upsample_linear(g)
        f = g
        for l in range(self.cfg.levels - 1, 0, -1):
            f = self.decoder_level(f, trace[l - 1], l)
        logits = conv_nd(f, self.head_w, self.head_b, stride=1, pad=0)
        if return_logits:
            return logits
        return softmax_channel(logits)


# ---------------------------------------------------------------------------
# self-counting: parameters and FLOPs per module


def _conv_flops(c_in, c_out, kernel_prod, out_prod, bias=True):
    f = 2 * c_in * kernel_prod * c_out * out_prod
    if bias:
        f += c_out * out_prod
    return f


def model_flops(cfg: ModelConfig, input_extents) -> dict[str, int]:
    """Analytic forward FLOPs per stage for one sample."""
    rank = cfg.spatial_rank
    k3 = 3 ** rank
    extents = tuple(input_extents)
    flops = {"encoder": 0, "mixer": 0, "decoder": 0, "head": 0}
    for l in range(1, cfg.levels + 1):
        c_in = 1 if l == 1 else cfg.channels_at(l - 1)
        c = cfg.channels_at(l)
        n_out = int(np.prod([e // 2 ** (l - 1) for e in extents]))
        flops["encoder"] += _conv_flops(c_in, c, k3, n_out)
        flops["encoder"] += _conv_flops(c, c, k3, n_out) + 2 * c * n_out  # + ReLUs
        if l < cfg.levels:
            n_down = n_out // 2 ** rank
            if cfg.downsample == "conv":
                flops["encoder"] += _conv_flops(c, c, 2 ** rank, n_down)
            else:
                flops["encoder"] += c * n_out
    bottleneck = tuple(e // 2 ** (cfg.levels - 1) for e in extents)
    n_tok = int(np.prod(bottleneck)) // cfg.patch_size ** rank
    c_bot = cfg.channels_at(cfg.levels)
    tok_dim = c_bot * cfg.patch_size ** rank
    z = cfg.embed_dim
    flops["mixer"] += 2 * n_tok * tok_dim * z + n_tok * z  # embedding + positions
    per_block = (
        mlstm_scan_flops(n_tok, z, cfg.heads)
        + 2 * n_tok * z * 4 * z          # up-projection
        + 2 * n_tok * 2 * z * 4          # causal conv (width 4, depthwise)
        + 10 * n_tok * 2 * z             # SiLUs and gating, approx
        + 2 * n_tok * 2 * z * z          # down-projection
        + 8 * n_tok * z                  # layer norm, residual
    )
    flops["mixer"] += cfg.vil_blocks * per_block
    n_bot = int(np.prod(bottleneck))
    flops["mixer"] += _conv_flops(z, c_bot, 1, n_bot // cfg.patch_size ** rank)
    for l in range(cfg.levels - 1, 0, -1):
        c_skip = cfg.channels_at(l)
        c_up = cfg.channels_at(l + 1)
        n_out = int(np.prod([e // 2 ** (l - 1) for e in extents]))
        flops["decoder"] += 4 * c_up * n_out  # x2 linear upsample, approx
        flops["decoder"] += _conv_flops(c_up + c_skip, c_skip, k3, n_out)
        flops["decoder"] += _conv_flops(c_skip, c_skip, k3, n_out) + 2 * c_skip * n_out
    n_full = int(np.prod(extents))
    flops["head"] = _conv_flops(cfg.channels_at(1), cfg.num_classes, 1, n_full)
    flops["head"] += 5 * cfg.num_classes * n_full  # softmax, approx
    flops["total"] = sum(flops.values())
    return flops


def model_param_counts(model: VilUNet) -> dict[str, int]:
    groups = {"encoder": 0, "mixer": 0, "decoder": 0, "head": 0}
    for name, p in model.param_dict().items():
        if name.startswith("enc."):
            groups["encoder"] += p.size
        elif name.startswith(("vil.", "embed.", "restore.")):
            groups["mixer"] += p.size
        elif name.startswith("dec."):
            groups["decoder"] += p.size
        else:
            groups["head"] += p.size
    groups["total"] = sum(groups.values())
    return groups


def architecture_summary(model: VilUNet) -> str:
    """Structured text report: per-module parameter counts and forward FLOPs."""
    cfg = model.cfg
    counts = model_param_counts(model)
    flops = model_flops(cfg, model.input_extents)
    lines = [
        "architecture summary",
        f"  spatial_rank={cfg.spatial_rank} levels={cfg.levels} "
        f"base_channels={cfg.base_channels} patch_size={cfg.patch_size} "
        f"embed_dim={cfg.embed_dim} vil_blocks={cfg.vil_blocks} "
        f"heads={cfg.heads} num_classes={cfg.num_classes}",
        f"  input extents: {model.input_extents}",
        f"  {'module':<10}{'params':>12}{'forward FLOPs':>16}",
    ]
    for key in ("encoder", "mixer", "decoder", "head", "total"):
        lines.append(f"  {key:<10}{counts[key]:>12}{flops[key]:>16}")
    return "\n".join(lines)
