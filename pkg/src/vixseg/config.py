"""Plain-text key=value run configuration.

Lines hold ``key = value`` pairs; ``#`` starts a comment.  Unknown keys are
rejected.  Every key has a default except the manifests.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError
from .unet import ModelConfig


def _parse_bool(v: str) -> bool:
    lv = v.strip().lower()
    if lv in ("true", "1", "yes"):
        return True
    if lv in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


@dataclass
class RunConfig:
    # model
    levels: int = 4
    base_channels: int = 16
    patch_size: int = 2
    embed_dim: int = 64
    vil_blocks: int = 6
    heads: int = 4
    num_classes: int = 2
    spatial_rank: int = 2
    residual_vil: bool = True
    downsample: str = "conv"
    # optimizer
    lr: float = 1e-4
    weight_decay: float = 1e-5
    iters: int = 100
    batch_size: int = 4
    # data
    train_manifest: str = ""
    test_manifest: str = ""
    seed: int = 0
    # loss
    mu: float = 1e-5

    def model_config(self) -> ModelConfig:
        cfg = ModelConfig(
            spatial_rank=self.spatial_rank,
            levels=self.levels,
            base_channels=self.base_channels,
            patch_size=self.patch_size,
            embed_dim=self.embed_dim,
            vil_blocks=self.vil_blocks,
            num_classes=self.num_classes,
            heads=self.heads,
            residual_vil=self.residual_vil,
            downsample=self.downsample,
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.model_config()
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.iters < 0:
            raise ConfigError(f"iters must be >= 0, got {self.iters}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mu < 0:
            raise ConfigError(f"mu must be >= 0, got {self.mu}")


_PARSERS = {
    int: int,
    float: float,
    str: str,
    bool: _parse_bool,
}


def parse_run_config(path) -> RunConfig:
    cfg = RunConfig()
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(RunConfig)}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _PARSERS[types[key]](value))
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    cfg.validate()
    return cfg
