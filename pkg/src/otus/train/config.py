"""Training configuration and the learning-rate schedule."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from ..errors import InvalidArgumentError
from ..nn import DiscriminatorSpec, GeneratorSpec

MODES = ("unsupervised", "supervised")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "unsupervised"
    gamma: float = 10.0
    epochs: int = 200
    lr_start: float = 5e-4
    lr_end: float = 1e-4
    batch_size: int = 4
    seed: int = 0
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    gen_filters: int = 8
    gen_depth: int = 9
    disc_filters: int = 16
    disc_blocks: int = 4
    lambda_l1: float = 1.0
    lambda_ssim: float = 1.0
    steps_per_epoch: int = 0  # 0: one pass over the smaller domain
    augment: bool = True
    keep_all_checkpoints: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}")
        if not self.gamma > 0:
            raise InvalidArgumentError("gamma must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.steps_per_epoch < 0:
            raise InvalidArgumentError("epochs and batch_size must be >= 1")
        for name in ("lr_start", "lr_end", "adam_eps"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise InvalidArgumentError("Adam betas must lie in [0, 1)")
        if self.lambda_l1 < 0 or self.lambda_ssim < 0 or self.lambda_l1 + self.lambda_ssim == 0:
            raise InvalidArgumentError("supervised loss weights must be non-negative, not both zero")

    @property
    def generator_spec(self):
        return GeneratorSpec(self.gen_filters, self.gen_depth)

    @property
    def discriminator_spec(self):
        return DiscriminatorSpec(self.disc_filters, self.disc_blocks)

    def lr(self, epoch):
        """lr(e) = lr_start + (lr_end - lr_start) * e / (epochs - 1); constant for one epoch."""
        if self.epochs == 1:
            return self.lr_start
        t = epoch / (self.epochs - 1)
        # convex form hits both endpoints exactly
        return (1.0 - t) * self.lr_start + t * self.lr_end

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        """Build from string or typed values; unknown keys are rejected."""
        known = {f.name: f for f in fields(cls)}
        out = {}
        for key, value in values.items():
            if key not in known:
                raise InvalidArgumentError(f"unknown training option {key!r}")
            out[key] = _coerce(known[key].type, value, key)
        return cls(**out)

    def with_(self, **changes):
        return replace(self, **changes)


def supervised_defaults(**overrides):
    """Supervised baseline: Adam (0.9, 0.999, 1e-8)."""
    base = dict(mode="supervised", adam_beta1=0.9, adam_beta2=0.999, adam_eps=1e-8)
    base.update(overrides)
    return TrainConfig(**base)


def _coerce(kind, value, key):
    if not isinstance(value, str):
        return value
    try:
        if kind in ("bool", bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind in ("int", int):
            return int(value)
        if kind in ("float", float):
            return float(value)
    except ValueError:
        raise InvalidArgumentError(f"bad value {value!r} for {key}") from None
    return value
