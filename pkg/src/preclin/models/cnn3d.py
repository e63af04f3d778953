"""Plain volumetric convolutional classifier.

Five conv blocks (conv, batch norm, ReLU, dropout, max pool) followed by
three fully connected layers and a sigmoid over a single logit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from ..errors import ConfigError


def _as_tuple(value, n, name):
    if isinstance(value, int):
        return (value,) * n
    out = tuple(int(v) for v in value)
    if len(out) != n:
        raise ConfigError(f"{name} needs {n} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class Cnn3dConfig:
    input_shape: tuple[int, int, int] = (64, 64, 64)
    channels: tuple[int, ...] = (8, 16, 32, 64, 64)
    kernel_size: int = 3
    # one pool factor per block; an int is broadcast to every block
    pool: int | tuple[int, ...] = 2
    dropout: float = 0.3
    fc_sizes: tuple[int, int, int] = (256, 64, 1)

    def __post_init__(self):
        if len(self.input_shape) != 3 or any(s <= 0 for s in self.input_shape):
            raise ConfigError(f"bad input_shape {self.input_shape}")
        if len(self.channels) != 5 or any(c <= 0 for c in self.channels):
            raise ConfigError(
                f"exactly 5 conv blocks are required, got {self.channels}")
        if self.kernel_size <= 0:
            raise ConfigError("kernel_size must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if len(self.fc_sizes) != 3 or self.fc_sizes[-1] != 1:
            raise ConfigError("fc_sizes must be three layers ending in 1")
        object.__setattr__(
            self, "pool", _as_tuple(self.pool, len(self.channels), "pool"))
        if any(p <= 0 for p in self.pool):
            raise ConfigError(f"pool factors must be positive, got {self.pool}")

    def pooled_shape(self) -> tuple[int, int, int]:
        """Spatial shape after all blocks; raises if any axis collapses."""
        k, pad = self.kernel_size, self.kernel_size // 2
        shape = list(self.input_shape)
        for i, p in enumerate(self.pool):
            for ax in range(3):
                shape[ax] = (shape[ax] + 2 * pad - k + 1) // p
            if any(s < 1 for s in shape):
                raise ConfigError(
                    f"input {self.input_shape} collapses at block {i} "
                    f"with pools {self.pool}")
        return tuple(shape)

    def flat_features(self) -> int:
        d, h, w = self.pooled_shape()
        return self.channels[-1] * d * h * w


class VolumeCnn3d(nn.Module):
    def __init__(self, config: Cnn3dConfig | None = None, seed: int = 0):
        super().__init__()
        self.config = config or Cnn3dConfig()
        cfg = self.config
        cfg.pooled_shape()
        gen = torch.Generator().manual_seed(seed)

        blocks = []
        in_ch = 1
        pad = cfg.kernel_size // 2
        for out_ch, p in zip(cfg.channels, cfg.pool):
            blocks.append(nn.Sequential(
                nn.Conv3d(in_ch, out_ch, cfg.kernel_size, padding=pad),
                nn.BatchNorm3d(out_ch),
                nn.ReLU(),
                nn.Dropout3d(cfg.dropout),
                nn.MaxPool3d(p),
            ))
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)

        sizes = (cfg.flat_features(),) + cfg.fc_sizes
        self.fc = nn.ModuleList(
            nn.Linear(sizes[i], sizes[i + 1]) for i in range(3))
        self._reset_parameters(gen)

    def _reset_parameters(self, gen: torch.Generator) -> None:
        # fan-in-scaled weights, zero biases, batch norm left at scale 1 shift 0
        for m in self.modules():
            if isinstance(m, (nn.Conv3d, nn.Linear)):
                fan_in = m.weight[0].numel()
                bound = fan_in ** -0.5
                with torch.no_grad():
                    m.weight.uniform_(-bound, bound, generator=gen)
                    if m.bias is not None:
                        m.bias.zero_()

    def forward_logits(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 5 or x.shape[1] != 1:
            raise ConfigError(f"expected (n, 1, d, h, w) input, got {tuple(x.shape)}")
        if tuple(x.shape[2:]) != self.config.input_shape:
            raise ConfigError(
                f"expected spatial shape {self.config.input_shape}, "
                f"got {tuple(x.shape[2:])}")
        for block in self.blocks:
            x = block(x)
        x = x.flatten(1)
        x = torch.relu(self.fc[0](x))
        x = torch.relu(self.fc[1](x))
        return self.fc[2](x).squeeze(-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Probability of the positive class for each volume."""
        return torch.sigmoid(self.forward_logits(x))
