"""Optimizer construction from a validated declarative spec."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigError

OPTIMIZER_KINDS = ("sgd", "adam", "adamw")


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str
    lr: float
    momentum: float = 0.0
    nesterov: bool = False
    weight_decay: float = 0.0
    amsgrad: bool = False

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.kind != "sgd" and (self.momentum != 0.0 or self.nesterov):
            raise ConfigError("momentum/nesterov are sgd-only options")
        if self.kind == "sgd" and self.amsgrad:
            raise ConfigError("amsgrad is an adam/adamw-only option")
        if self.nesterov and self.momentum <= 0:
            raise ConfigError("nesterov requires positive momentum")

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lr": self.lr,
            "momentum": self.momentum,
            "nesterov": self.nesterov,
            "weight_decay": self.weight_decay,
            "amsgrad": self.amsgrad,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerSpec":
        unknown = set(data) - {"kind", "lr", "momentum", "nesterov",
                               "weight_decay", "amsgrad"}
        if unknown:
            raise ConfigError(f"unknown optimizer keys {sorted(unknown)}")
        if "kind" not in data or "lr" not in data:
            raise ConfigError("optimizer spec needs at least kind and lr")
        return cls(**data)


def make_optimizer(spec: OptimizerSpec, params) -> torch.optim.Optimizer:
    if spec.kind == "sgd":
        return torch.optim.SGD(params, lr=spec.lr, momentum=spec.momentum,
                               nesterov=spec.nesterov,
                               weight_decay=spec.weight_decay)
    if spec.kind == "adam":
        return torch.optim.Adam(params, lr=spec.lr, weight_decay=spec.weight_decay,
                                amsgrad=spec.amsgrad)
    return torch.optim.AdamW(params, lr=spec.lr, weight_decay=spec.weight_decay,
                             amsgrad=spec.amsgrad)


def default_optimizer_spec(model_kind: str) -> OptimizerSpec:
    """Published per-model training settings."""
    if model_kind == "cnn3d":
        return OptimizerSpec(kind="adamw", lr=1e-5, weight_decay=0.1)
    if model_kind == "rvn":
        return OptimizerSpec(kind="adamw", lr=1e-4)
    if model_kind == "transformer":
        return OptimizerSpec(kind="sgd", lr=1e-4, momentum=9e-4, nesterov=True)
    raise ConfigError(f"unknown model kind {model_kind!r}")


DEFAULT_EPOCHS = {"cnn3d": 50, "rvn": 200, "transformer": 200}
