"""Recurrent visual attention agent over volumes.

The agent looks at a volume through a sequence of small cubic glimpses.
Each step fuses a "what" embedding of the glimpse with a "where"
embedding of its location (elementwise product), feeds two stacked LSTM
cells, and samples the next location from an isotropic Gaussian policy.
A sigmoid head on the final hidden state gives the class probability.
Locations are hard attention: gradients reach the policy only through
the score function, never through glimpse extraction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..errors import ConfigError
from ..volume_io import VoxelVolume


@dataclass(frozen=True)
class RvnConfig:
    glimpse_side: int = 40
    glimpse_channels: tuple[int, ...] = (8, 16)
    glimpse_dim: int = 128
    hidden_size: int = 256
    n_glimpses: int = 6
    location_sigma: float = 0.2

    def __post_init__(self):
        if self.glimpse_side < 1:
            raise ConfigError("glimpse_side must be >= 1")
        if not self.glimpse_channels or any(c <= 0 for c in self.glimpse_channels):
            raise ConfigError(f"bad glimpse_channels {self.glimpse_channels}")
        side = self.glimpse_side
        for _ in self.glimpse_channels:
            side //= 2
            if side < 1:
                raise ConfigError(
                    f"glimpse_side {self.glimpse_side} collapses under "
                    f"{len(self.glimpse_channels)} pooling stages")
        if self.glimpse_dim < 1 or self.hidden_size < 1:
            raise ConfigError("glimpse_dim and hidden_size must be >= 1")
        if self.n_glimpses < 1:
            raise ConfigError("n_glimpses must be >= 1")
        if not self.location_sigma > 0:
            raise ConfigError("location_sigma must be positive")


def _glimpse_starts(shape, location, side):
    """Start index per axis of a side-cube centered at the mapped voxel.

    Normalized coordinate -1 maps to index 0 and +1 to the last index.
    """
    starts = []
    for ax in range(3):
        n = shape[ax]
        center = (float(location[ax]) + 1.0) / 2.0 * (n - 1)
        starts.append(int(math.floor(center - (side - 1) / 2.0 + 0.5)))
    return starts


def extract_glimpse(volume, location, side: int) -> np.ndarray:
    """Crop a side-cube at a normalized location, zero-padding outside."""
    if side < 1:
        raise ConfigError("glimpse side must be >= 1")
    voxels = volume.voxels if isinstance(volume, VoxelVolume) else np.asarray(volume)
    if voxels.ndim != 3:
        raise ConfigError(f"expected a 3-d volume, got ndim {voxels.ndim}")
    starts = _glimpse_starts(voxels.shape, location, side)
    out = np.zeros((side, side, side), dtype=voxels.dtype)
    src, dst = [], []
    for ax, s in enumerate(starts):
        lo = max(s, 0)
        hi = min(s + side, voxels.shape[ax])
        if hi <= lo:
            return out
        src.append(slice(lo, hi))
        dst.append(slice(lo - s, hi - s))
    out[tuple(dst)] = voxels[tuple(src)]
    return out


def extract_glimpse_batch(volumes: torch.Tensor, locations: torch.Tensor,
                          side: int) -> torch.Tensor:
    """Batched crop: (b, 1, d, h, w) + (b, 3) locations -> (b, 1, side^3)."""
    if volumes.dim() != 5 or volumes.shape[1] != 1:
        raise ConfigError(f"expected (b, 1, d, h, w), got {tuple(volumes.shape)}")
    b = volumes.shape[0]
    out = volumes.new_zeros((b, 1, side, side, side))
    locs = locations.detach().cpu().numpy()
    shape = volumes.shape[2:]
    for i in range(b):
        starts = _glimpse_starts(shape, locs[i], side)
        src, dst = [], []
        empty = False
        for ax, s in enumerate(starts):
            lo = max(s, 0)
            hi = min(s + side, shape[ax])
            if hi <= lo:
                empty = True
                break
            src.append(slice(lo, hi))
            dst.append(slice(lo - s, hi - s))
        if not empty:
            out[(i, 0) + tuple(dst)] = volumes[(i, 0) + tuple(src)]
    return out


class GlimpseNetwork(nn.Module):
    """Fuses glimpse content and location: g = what(x) * where(l)."""

    def __init__(self, config: RvnConfig):
        super().__init__()
        self.config = config
        layers = []
        in_ch = 1
        side = config.glimpse_side
        for ch in config.glimpse_channels:
            layers += [nn.Conv3d(in_ch, ch, 3, padding=1),
                       nn.BatchNorm3d(ch), nn.ReLU(), nn.MaxPool3d(2)]
            in_ch = ch
            side //= 2
        self.conv = nn.Sequential(*layers)
        self.what_fc = nn.Linear(in_ch * side ** 3, config.glimpse_dim)
        self.where_fc = nn.Linear(3, config.glimpse_dim)

    def what_features(self, patches: torch.Tensor) -> torch.Tensor:
        g = self.config.glimpse_side
        if patches.shape[-3:] != (g, g, g):
            raise ConfigError(
                f"expected {g}^3 glimpses, got {tuple(patches.shape[-3:])}")
        return self.what_fc(self.conv(patches).flatten(1))

    def where_features(self, locations: torch.Tensor) -> torch.Tensor:
        return self.where_fc(locations)

    def forward(self, patches: torch.Tensor, locations: torch.Tensor) -> torch.Tensor:
        return self.what_features(patches) * self.where_features(locations)


class RecurrentCore(nn.Module):
    """Two stacked LSTM cells."""

    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.cell1 = nn.LSTMCell(input_size, hidden_size)
        self.cell2 = nn.LSTMCell(hidden_size, hidden_size)
        self.hidden_size = hidden_size

    def initial_state(self, batch: int, like: torch.Tensor):
        z = like.new_zeros((batch, self.hidden_size))
        return (z, z.clone()), (z.clone(), z.clone())

    def forward(self, g: torch.Tensor, state):
        (h1, c1), (h2, c2) = state
        h1, c1 = self.cell1(g, (h1, c1))
        h2, c2 = self.cell2(h1, (h2, c2))
        return (h1, c1), (h2, c2)


class LocationNetwork(nn.Module):
    """Gaussian policy over the next glimpse center."""

    def __init__(self, hidden_size: int, sigma: float):
        super().__init__()
        self.fc = nn.Linear(hidden_size, 3)
        self.sigma = float(sigma)

    def forward(self, hidden: torch.Tensor, stochastic: bool = True,
                generator: torch.Generator | None = None):
        """Returns (mean, sample, log_prob).

        The sample is detached (hard attention) and clamped to [-1, 1];
        the log-density is evaluated at the unclamped draw, keeping the
        mean in the graph so score-function gradients flow to the policy.
        """
        mean = torch.tanh(self.fc(hidden))
        if stochastic:
            noise = torch.randn(mean.shape, generator=generator,
                                dtype=mean.dtype, device=mean.device)
            draw = (mean + self.sigma * noise).detach()
        else:
            draw = mean.detach()
        var = self.sigma ** 2
        log_prob = (-0.5 * ((draw - mean) ** 2 / var
                            + math.log(2.0 * math.pi * var))).sum(-1)
        return mean, draw.clamp(-1.0, 1.0), log_prob


@dataclass
class Trajectory:
    """One rollout: the T visited locations in order, first at the center."""
    locations: list[list[float]]
    log_probs: list[float]
    probability: float
    reward: float | None = None

    def __post_init__(self):
        if len(self.locations) != len(self.log_probs):
            raise ConfigError("locations and log_probs must align")
        for loc in self.locations:
            if len(loc) != 3 or any(abs(c) > 1.0 + 1e-9 for c in loc):
                raise ConfigError(f"location {loc} outside [-1,1]^3")

    def __len__(self) -> int:
        return len(self.locations)


class GlimpseAgent(nn.Module):
    def __init__(self, config: RvnConfig | None = None, seed: int = 0):
        super().__init__()
        self.config = config or RvnConfig()
        cfg = self.config
        self.glimpse_net = GlimpseNetwork(cfg)
        self.core = RecurrentCore(cfg.glimpse_dim, cfg.hidden_size)
        self.locator = LocationNetwork(cfg.hidden_size, cfg.location_sigma)
        self.classifier = nn.Linear(cfg.hidden_size, 1)
        self.baseliner = nn.Linear(cfg.hidden_size, 1)
        self._reset_parameters(torch.Generator().manual_seed(seed))

    def _reset_parameters(self, gen: torch.Generator) -> None:
        for m in self.modules():
            if isinstance(m, (nn.Conv3d, nn.Linear)):
                bound = m.weight[0].numel() ** -0.5
                with torch.no_grad():
                    m.weight.uniform_(-bound, bound, generator=gen)
                    if m.bias is not None:
                        m.bias.zero_()
            elif isinstance(m, nn.LSTMCell):
                bound = m.hidden_size ** -0.5
                with torch.no_grad():
                    for p in m.parameters():
                        p.uniform_(-bound, bound, generator=gen)

    def rollout(self, volumes: torch.Tensor, stochastic: bool | None = None,
                generator: torch.Generator | None = None,
                locations: torch.Tensor | None = None):
        """Run the T-step loop over a (b, 1, d, h, w) batch.

        Returns (probs (b,), locations (b,T,3), log_probs (b,T),
        baselines (b,T)). The first location is always the volume center
        with log-prob 0. When ``locations`` is given the recorded path is
        replayed verbatim and the policy head is never consulted.
        """
        if stochastic is None:
            stochastic = self.training
        cfg = self.config
        b = volumes.shape[0]
        t_total = cfg.n_glimpses
        if locations is not None and locations.shape != (b, t_total, 3):
            raise ConfigError(
                f"replay locations must be ({b}, {t_total}, 3), "
                f"got {tuple(locations.shape)}")

        state = self.core.initial_state(b, volumes)
        loc = (volumes.new_zeros((b, 3)) if locations is None
               else locations[:, 0, :])
        locs = [loc]
        log_probs = [volumes.new_zeros(b)]
        baselines = []
        for t in range(t_total):
            patches = extract_glimpse_batch(volumes, loc, cfg.glimpse_side)
            g = self.glimpse_net(patches, loc)
            state = self.core(g, state)
            top_h = state[1][0]
            baselines.append(self.baseliner(top_h.detach()).squeeze(-1))
            if t + 1 < t_total:
                if locations is None:
                    _, loc, lp = self.locator(top_h, stochastic, generator)
                else:
                    loc = locations[:, t + 1, :]
                    lp = volumes.new_zeros(b)
                locs.append(loc)
                log_probs.append(lp)
        probs = torch.sigmoid(self.classifier(state[1][0])).squeeze(-1)
        return (probs, torch.stack(locs, 1), torch.stack(log_probs, 1),
                torch.stack(baselines, 1))

    def forward(self, volumes: torch.Tensor) -> torch.Tensor:
        return self.rollout(volumes)[0]

    def run(self, volume, stochastic: bool = False,
            generator: torch.Generator | None = None) -> tuple[float, Trajectory]:
        """Single-volume rollout returning a plain Trajectory record."""
        voxels = volume.voxels if isinstance(volume, VoxelVolume) else np.asarray(volume)
        x = torch.as_tensor(voxels, dtype=next(self.parameters()).dtype)
        with torch.no_grad():
            probs, locs, lps, _ = self.rollout(
                x.unsqueeze(0).unsqueeze(0), stochastic=stochastic,
                generator=generator)
        return float(probs[0]), Trajectory(
            locations=[[float(c) for c in row] for row in locs[0]],
            log_probs=[float(v) for v in lps[0]],
            probability=float(probs[0]))


def reward_signal(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """1 where the thresholded prediction matches the label, else 0."""
    preds = (probs >= 0.5).to(labels.dtype)
    return (preds == labels).to(probs.dtype).detach()


def agent_loss(probs: torch.Tensor, labels: torch.Tensor,
               log_probs: torch.Tensor, baselines: torch.Tensor,
               rewards: torch.Tensor | None = None) -> dict:
    """Hybrid objective over a batch of rollouts.

    classification_term: binary cross-entropy on the final probability.
    reinforce_term: -sum_t log_prob_t * (r - b_t), advantage held constant.
    baseline_term: sum_t (b_t - r)^2.
    Batch-reduced by mean; rewards broadcast to every timestep.
    """
    if log_probs.shape != baselines.shape:
        raise ConfigError(
            f"log_probs {tuple(log_probs.shape)} and baselines "
            f"{tuple(baselines.shape)} must align")
    if rewards is None:
        rewards = reward_signal(probs, labels)
    r = rewards.detach().unsqueeze(-1)
    eps = 1e-7
    p = probs.clamp(eps, 1.0 - eps)
    y = labels.to(probs.dtype)
    classification = -(y * p.log() + (1.0 - y) * (1.0 - p).log()).mean()
    advantage = (r - baselines).detach()
    reinforce = -(log_probs * advantage).sum(-1).mean()
    baseline = ((baselines - r) ** 2).sum(-1).mean()
    total = classification + reinforce + baseline
    return {"total": total, "classification_term": classification,
            "reinforce_term": reinforce, "baseline_term": baseline}


def rvn_loss(probability, label, trajectory: Trajectory, baselines) -> dict:
    """Single-rollout loss; see agent_loss for the term definitions."""
    if len(baselines) != len(trajectory):
        raise ConfigError(
            f"expected {len(trajectory)} baselines, got {len(baselines)}")
    probs = torch.as_tensor([float(probability)], dtype=torch.float64)
    labels = torch.as_tensor([int(label)])
    lps = torch.as_tensor([trajectory.log_probs], dtype=torch.float64)
    bs = torch.as_tensor([[float(b) for b in baselines]], dtype=torch.float64)
    terms = agent_loss(probs, labels, lps, bs)
    out = {k: float(v) for k, v in terms.items()}
    trajectory.reward = float(reward_signal(probs, labels.to(probs.dtype))[0])
    return out


def to_voxel_coords(location, volume_shape) -> list[float]:
    """Map a normalized location to voxel coordinates (-1 -> 0, +1 -> n-1)."""
    return [(float(location[ax]) + 1.0) / 2.0 * (volume_shape[ax] - 1)
            for ax in range(3)]


def export_trajectory(trajectory: Trajectory, volume_shape, path) -> None:
    if len(trajectory) == 0:
        raise ConfigError("cannot export an empty trajectory")
    record = {
        "volume_shape": [int(s) for s in volume_shape],
        "locations_normalized": trajectory.locations,
        "locations_voxel": [to_voxel_coords(loc, volume_shape)
                            for loc in trajectory.locations],
        "log_probs": trajectory.log_probs,
        "probability": trajectory.probability,
        "reward": trajectory.reward,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_trajectory(path) -> tuple[Trajectory, tuple[int, ...]]:
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    traj = Trajectory(locations=record["locations_normalized"],
                      log_probs=record["log_probs"],
                      probability=record["probability"],
                      reward=record.get("reward"))
    return traj, tuple(record["volume_shape"])
