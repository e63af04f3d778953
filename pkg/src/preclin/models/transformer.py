"""Frame-sequence transformer over axial slice stacks.

Each frame passes a 1-to-3 channel stem convolution and a VGG16-style
conv stack to a d-dim feature; sinusoidal positional encodings are added
and a learned query vector is refined against the frame memory by three
block head units (multi-head attention, residual + layer norm, position
wise feed-forward, residual + layer norm). A linear layer and softmax
give the two-class probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from ..checkpoints import load_checkpoint, save_checkpoint
from ..errors import ConfigError

VGG16_STAGES = ((64, 64), (128, 128), (256, 256, 256),
                (512, 512, 512), (512, 512, 512))


@dataclass(frozen=True)
class TransformerConfig:
    n_frames: int = 96
    frame_size: int = 224
    d_model: int = 512
    n_heads: int = 8
    n_units: int = 3
    ff_width: int = 2048
    backbone_stages: tuple[tuple[int, ...], ...] = VGG16_STAGES
    backbone_init: str = "scratch"

    def __post_init__(self):
        if self.n_frames < 1 or self.frame_size < 1:
            raise ConfigError("n_frames and frame_size must be >= 1")
        if self.d_model % 2 != 0:
            raise ConfigError(f"d_model must be even, got {self.d_model}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by heads {self.n_heads}")
        if self.n_units != 3:
            raise ConfigError("the head runs exactly 3 block head units")
        if self.ff_width < 1:
            raise ConfigError("ff_width must be >= 1")
        if not self.backbone_stages or any(
                not stage or any(c <= 0 for c in stage)
                for stage in self.backbone_stages):
            raise ConfigError(f"bad backbone_stages {self.backbone_stages}")
        size = self.frame_size
        for _ in self.backbone_stages:
            size //= 2
            if size < 1:
                raise ConfigError(
                    f"frame_size {self.frame_size} collapses under "
                    f"{len(self.backbone_stages)} pooling stages")
        if self.backbone_init != "scratch" and not self.backbone_init.startswith(
                "pretrained:"):
            raise ConfigError(
                'backbone_init must be "scratch" or "pretrained:<path>"')


def sinusoidal_encoding(n_positions: int, d: int,
                        dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """PE(p, 2i) = sin(p / 10000^(2i/d)), PE(p, 2i+1) = cos(same)."""
    if d % 2 != 0:
        raise ConfigError(f"positional encoding needs even d, got {d}")
    pos = torch.arange(n_positions, dtype=torch.float64).unsqueeze(1)
    i2 = torch.arange(0, d, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i2 / d)
    pe = torch.empty((n_positions, d), dtype=torch.float64)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle)
    return pe.to(dtype)


def positional_encode(features: torch.Tensor) -> torch.Tensor:
    """Add fixed sinusoidal encodings along the sequence dimension."""
    if features.dim() not in (2, 3):
        raise ConfigError(
            f"expected (n, d) or (b, n, d) features, got {tuple(features.shape)}")
    n, d = features.shape[-2], features.shape[-1]
    return features + sinusoidal_encoding(n, d, features.dtype)


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
              return_weights: bool = False):
    """softmax(Q K^T / sqrt(d_k)) V over the last two dims."""
    if q.shape[-1] != k.shape[-1]:
        raise ConfigError(
            f"query dim {q.shape[-1]} != key dim {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ConfigError(
            f"key rows {k.shape[-2]} != value rows {v.shape[-2]}")
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    weights = torch.softmax(scores, dim=-1)
    out = weights @ v
    return (out, weights) if return_weights else out


def layer_norm(x: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Normalization over the last dim, before any affine transform."""
    mean = x.mean(-1, keepdim=True)
    var = x.var(-1, unbiased=False, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps)


class LayerNorm(nn.Module):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(d))
        self.bias = nn.Parameter(torch.zeros(d))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layer_norm(x, self.eps) * self.weight + self.bias


class MultiHeadAttention(nn.Module):
    def __init__(self, d: int, n_heads: int):
        super().__init__()
        if d % n_heads != 0:
            raise ConfigError(f"d {d} not divisible by heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = d // n_heads
        self.wq = nn.Linear(d, d)
        self.wk = nn.Linear(d, d)
        self.wv = nn.Linear(d, d)
        self.wo = nn.Linear(d, d)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        # (..., n, d) -> (..., h, n, d_head)
        new = x.shape[:-1] + (self.n_heads, self.d_head)
        return x.view(new).transpose(-3, -2)

    def forward(self, query: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        q = self._split(self.wq(query))
        k = self._split(self.wk(memory))
        v = self._split(self.wv(memory))
        ctx = attention(q, k, v)
        ctx = ctx.transpose(-3, -2).contiguous()
        ctx = ctx.view(ctx.shape[:-2] + (self.n_heads * self.d_head,))
        return self.wo(ctx)


class BlockHeadUnit(nn.Module):
    """One query-refinement stage: attention then feed-forward, each with
    a residual connection and layer norm."""

    def __init__(self, d: int, n_heads: int, ff_width: int):
        super().__init__()
        self.mha = MultiHeadAttention(d, n_heads)
        self.norm1 = LayerNorm(d)
        self.ff = nn.Sequential(nn.Linear(d, ff_width), nn.ReLU(),
                                nn.Linear(ff_width, d))
        self.norm2 = LayerNorm(d)

    def forward(self, query: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        x = self.norm1(query + self.mha(query, memory))
        return self.norm2(x + self.ff(x))


class FrameBackbone(nn.Module):
    """Stem conv (1 -> 3 channels) plus a VGG16-topology encoder to d dims."""

    def __init__(self, config: TransformerConfig):
        super().__init__()
        self.config = config
        self.stem = nn.Conv2d(1, 3, kernel_size=3, stride=1, padding=1,
                              dilation=1)
        layers = []
        in_ch = 3
        size = config.frame_size
        for stage in config.backbone_stages:
            for ch in stage:
                layers += [nn.Conv2d(in_ch, ch, 3, padding=1), nn.ReLU()]
                in_ch = ch
            layers.append(nn.MaxPool2d(2))
            size //= 2
        self.encoder = nn.Sequential(*layers)
        self.project = nn.Linear(in_ch * size * size, config.d_model)

    def stem_conv(self, frames: torch.Tensor) -> torch.Tensor:
        s = self.config.frame_size
        if frames.dim() != 4 or frames.shape[1] != 1 or frames.shape[2:] != (s, s):
            raise ConfigError(
                f"expected (n, 1, {s}, {s}) frames, got {tuple(frames.shape)}")
        return self.stem(frames)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """(n, 1, s, s) -> (n, d), frames independent and order-preserved."""
        x = self.encoder(self.stem_conv(frames))
        return self.project(x.flatten(1))


class FrameSequenceTransformer(nn.Module):
    def __init__(self, config: TransformerConfig | None = None, seed: int = 0):
        super().__init__()
        self.config = config or TransformerConfig()
        cfg = self.config
        self.backbone = FrameBackbone(cfg)
        self.units = nn.ModuleList(
            BlockHeadUnit(cfg.d_model, cfg.n_heads, cfg.ff_width)
            for _ in range(cfg.n_units))
        self.query = nn.Parameter(torch.empty(1, cfg.d_model))
        self.classifier = nn.Linear(cfg.d_model, 2)
        self._reset_parameters(torch.Generator().manual_seed(seed))
        if cfg.backbone_init.startswith("pretrained:"):
            self.load_backbone(cfg.backbone_init.split(":", 1)[1])

    def _reset_parameters(self, gen: torch.Generator) -> None:
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                bound = m.weight[0].numel() ** -0.5
                with torch.no_grad():
                    m.weight.uniform_(-bound, bound, generator=gen)
                    if m.bias is not None:
                        m.bias.zero_()
        with torch.no_grad():
            self.query.normal_(0.0, self.config.d_model ** -0.5, generator=gen)

    def load_backbone(self, path) -> None:
        header, state = load_checkpoint(path)
        if header.get("kind") != "frame-backbone":
            raise ConfigError(
                f"{path} is not a frame-backbone checkpoint "
                f"(kind {header.get('kind')!r})")
        try:
            self.backbone.load_state_dict(state)
        except RuntimeError as exc:
            raise ConfigError(f"backbone weights do not fit: {exc}") from exc

    def save_backbone(self, path) -> None:
        save_checkpoint(path, self.backbone, {"kind": "frame-backbone"})

    def encode_frames(self, frames: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        batched = frames.dim() == 5
        if not batched:
            frames = frames.unsqueeze(0)
        b, n = frames.shape[0], frames.shape[1]
        if n != cfg.n_frames:
            raise ConfigError(f"expected {cfg.n_frames} frames, got {n}")
        feats = self.backbone(frames.reshape(b * n, *frames.shape[2:]))
        feats = positional_encode(feats.view(b, n, cfg.d_model))
        return feats if batched else feats.squeeze(0)

    def forward_logits(self, frames: torch.Tensor) -> torch.Tensor:
        batched = frames.dim() == 5
        memory = self.encode_frames(frames)
        if not batched:
            memory = memory.unsqueeze(0)
        q = self.query.unsqueeze(0).expand(memory.shape[0], -1, -1)
        for unit in self.units:
            q = unit(q, memory)
        logits = self.classifier(q.squeeze(1))
        return logits if batched else logits.squeeze(0)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """Two-class probabilities (class order: 0 then 1), rows sum to 1."""
        return torch.softmax(self.forward_logits(frames), dim=-1)
