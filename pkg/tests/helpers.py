"""Independent numeric oracles shared across the test suite.

Everything here is intentionally naive: nested loops, explicit gate
algebra, closed-form integrals.  The point is that model outputs get
checked against a second route, never against themselves.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from preclin.volume_io import ClinicalVisit, ScanSession, SubjectRecord

CN = "cognitively_normal"
AD = "ad_dementia"
UNCERTAIN = "uncertain_dementia"


def make_subject(subject_id: str, visits, scan_days,
                 volume_prefix: str = "vol") -> SubjectRecord:
    """visits: iterable of (day, diagnosis); scans get synthetic paths."""
    return SubjectRecord(
        subject_id=subject_id,
        visits=[ClinicalVisit(subject_id=subject_id, day=d, diagnosis=dx)
                for d, dx in visits],
        sessions=[ScanSession(subject_id=subject_id, day=d,
                              volume_path=f"{volume_prefix}/{subject_id}_{d}")
                  for d in scan_days],
    )


# Three longitudinal records with known conversion timing, used to pin
# lead-time arithmetic: a CN-matched scan taken years before the first
# AD visit.
REFERENCE_SUBJECTS = {
    "30205": dict(
        visits=[(0, CN), (406, CN), (773, CN),
                (1125, UNCERTAIN), (1460, UNCERTAIN), (1837, AD)],
        scan_days=[61],
    ),
    "30025": dict(
        visits=[(0, CN), (359, CN), (751, CN), (1106, CN), (1547, CN),
                (1915, CN), (2247, CN), (2608, CN), (2933, AD)],
        scan_days=[210, 2298],
    ),
    "30557": dict(
        visits=[(0, CN), (363, CN), (749, CN), (1076, CN), (1464, CN),
                (1980, CN), (2378, CN), (3093, CN), (3452, CN), (3816, CN),
                (4222, AD), (4586, AD)],
        scan_days=[1448, 2185],
    ),
}


def reference_subject(subject_id: str) -> SubjectRecord:
    return make_subject(subject_id, **REFERENCE_SUBJECTS[subject_id])


# --- convolution / pooling / normalization oracles --------------------------

def conv3d_oracle(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                  pad: int) -> np.ndarray:
    """Direct convolution of (cin, D, H, W) with (cout, cin, k, k, k)."""
    cin, d, h, w = x.shape
    cout, _, k, _, _ = weight.shape
    xp = np.zeros((cin, d + 2 * pad, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    xp[:, pad:pad + d, pad:pad + h, pad:pad + w] = x
    od, oh, ow = (d + 2 * pad - k + 1, h + 2 * pad - k + 1, w + 2 * pad - k + 1)
    out = np.zeros((cout, od, oh, ow), dtype=np.float64)
    for co in range(cout):
        for z in range(od):
            for y in range(oh):
                for xx in range(ow):
                    acc = float(bias[co])
                    for ci in range(cin):
                        for dz in range(k):
                            for dy in range(k):
                                for dx in range(k):
                                    acc += (xp[ci, z + dz, y + dy, xx + dx]
                                            * weight[co, ci, dz, dy, dx])
                    out[co, z, y, xx] = acc
    return out


def conv2d_oracle(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                  pad: int) -> np.ndarray:
    """Direct convolution of (cin, H, W) with (cout, cin, k, k)."""
    cin, h, w = x.shape
    cout, _, k, _ = weight.shape
    xp = np.zeros((cin, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    xp[:, pad:pad + h, pad:pad + w] = x
    oh, ow = h + 2 * pad - k + 1, w + 2 * pad - k + 1
    out = np.zeros((cout, oh, ow), dtype=np.float64)
    for co in range(cout):
        for y in range(oh):
            for xx in range(ow):
                acc = float(bias[co])
                for ci in range(cin):
                    for dy in range(k):
                        for dx in range(k):
                            acc += xp[ci, y + dy, xx + dx] * weight[co, ci, dy, dx]
                out[co, y, xx] = acc
    return out


def maxpool3d_oracle(x: np.ndarray, p: int) -> np.ndarray:
    """(c, D, H, W) block max with floor truncation, kernel == stride == p."""
    c, d, h, w = x.shape
    od, oh, ow = d // p, h // p, w // p
    out = np.empty((c, od, oh, ow), dtype=x.dtype)
    for ci in range(c):
        for z in range(od):
            for y in range(oh):
                for xx in range(ow):
                    out[ci, z, y, xx] = x[ci, z * p:(z + 1) * p,
                                          y * p:(y + 1) * p,
                                          xx * p:(xx + 1) * p].max()
    return out


def batchnorm_eval_oracle(x: np.ndarray, mean, var, gamma, beta,
                          eps: float = 1e-5) -> np.ndarray:
    """Per-channel frozen-stats normalization of (c, ...) data."""
    out = np.empty_like(x, dtype=np.float64)
    for c in range(x.shape[0]):
        out[c] = (x[c] - mean[c]) / math.sqrt(var[c] + eps) * gamma[c] + beta[c]
    return out


def lstm_cell_oracle(x, h, c, w_ih, w_hh, b_ih, b_hh):
    """One LSTMCell step from the gate algebra; gate order i, f, g, o."""
    def sigmoid(v):
        return 1.0 / (1.0 + np.exp(-v))

    gates = w_ih @ x + b_ih + w_hh @ h + b_hh
    n = len(h)
    i, f, g, o = (gates[:n], gates[n:2 * n], gates[2 * n:3 * n], gates[3 * n:])
    i, f, o = sigmoid(i), sigmoid(f), sigmoid(o)
    g = np.tanh(g)
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# --- finite-difference gradient harness --------------------------------------

def fd_gradients(loss_fn, params, step: float = 1e-3) -> list[torch.Tensor]:
    """Central finite differences of a scalar loss for every parameter."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p, dtype=torch.float64)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                keep = flat[i].item()
                flat[i] = keep + step
                up = float(loss_fn())
                flat[i] = keep - step
                down = float(loss_fn())
                flat[i] = keep
                gflat[i] = (up - down) / (2.0 * step)
            grads.append(g)
    return grads


def gradient_relative_errors(loss_fn, params, step: float = 1e-3,
                             zero_floor: float = 1e-7) -> torch.Tensor:
    """Flat vector of elementwise |analytic - fd| / max(|analytic|, |fd|).

    Components where both routes are below ``zero_floor`` contribute
    their absolute difference instead, so exact zeros compare cleanly.
    """
    params = list(params)
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.detach().double().clone() if p.grad is not None
                else torch.zeros_like(p, dtype=torch.float64) for p in params]
    fd = fd_gradients(lambda: loss_fn().detach(), params, step)

    errors = []
    for a, f in zip(analytic, fd):
        a, f = a.reshape(-1), f.reshape(-1)
        denom = torch.maximum(a.abs(), f.abs())
        raw = (a - f).abs()
        errors.append(torch.where(denom > zero_floor, raw / denom, raw))
    return torch.cat(errors)


# --- closed forms -------------------------------------------------------------

def gaussian_bump_expectation(mu: np.ndarray, c: np.ndarray,
                              sigma: float) -> float:
    """E[exp(-||l - c||^2)] for l ~ N(mu, sigma^2 I), per-axis product form."""
    s2 = sigma * sigma
    val = 1.0
    for m, ci in zip(mu, c):
        val *= math.exp(-((m - ci) ** 2) / (1.0 + 2.0 * s2)) / math.sqrt(1.0 + 2.0 * s2)
    return val


# --- finite-difference fixtures -------------------------------------------------

def cnn3d_grad_micro(input_shape=(8, 8, 8), weight_seed=45):
    """Volumetric-CNN miniature arranged so the loss is smooth along every
    +-1e-3 parameter perturbation: batch norm frozen at scale 0.1 / shift 1.0
    keeps all rectifier inputs far from zero, and pooling is disabled (it has
    no parameters of its own).  Returns (model, loss_fn, margin) where margin
    is the smallest |rectifier input| seen on the forward pass.
    """
    from preclin.models.cnn3d import Cnn3dConfig, VolumeCnn3d

    cfg = Cnn3dConfig(input_shape=input_shape, channels=(2, 2, 2, 2, 2),
                      kernel_size=3, pool=1, dropout=0.0, fc_sizes=(4, 2, 1))
    model = VolumeCnn3d(cfg, seed=0).double().eval()
    gen = torch.Generator().manual_seed(weight_seed)
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, torch.nn.Conv3d):
                fan = m.weight[0].numel()
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen,
                                           dtype=torch.float64) * (2.0 / fan) ** 0.5)
                m.bias.zero_()
            elif isinstance(m, torch.nn.BatchNorm3d):
                m.weight.fill_(0.1)
                m.bias.fill_(1.0)
            elif isinstance(m, torch.nn.Linear):
                fan = m.weight[0].numel()
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen,
                                           dtype=torch.float64) * (2.0 / fan) ** 0.5)
                m.bias.fill_(0.5)

    x = torch.randn(2, 1, *input_shape, dtype=torch.float64,
                    generator=torch.Generator().manual_seed(21))
    y = torch.tensor([1.0, 0.0], dtype=torch.float64)

    margin = float("inf")
    with torch.no_grad():
        h = x
        for block in model.blocks:
            z = block[1](block[0](h))
            margin = min(margin, z.abs().min().item())
            h = block[4](block[3](block[2](z)))
        v = h.flatten(1)
        for i, lin in enumerate(model.fc):
            z = lin(v)
            if i < 2:
                margin = min(margin, z.abs().min().item())
                v = torch.relu(z)

    def loss_fn():
        return torch.nn.functional.binary_cross_entropy_with_logits(
            model.forward_logits(x), y)

    return model, loss_fn, margin


def rvn_grad_micro(weight_seed=251, volume_seed=4):
    """Glimpse-agent miniature for finite differences, replayed on fixed
    locations so extraction indices never move.  Weights are arranged as in
    cnn3d_grad_micro (frozen batch norm keeps rectifiers away from zero);
    the returned margin is min(|rectifier input|, pool runner-up gap).

    Because the baseline head reads a detached hidden state, its term is
    differentiated against its own parameters only; the classification term
    is checked across all parameters (policy/baseline entries are exact
    zeros on both sides).  Returns (agent, volumes, labels, replay_locs,
    rewards, margin).
    """
    from preclin.models.rvn import RvnConfig, GlimpseAgent, extract_glimpse_batch

    cfg = RvnConfig(glimpse_side=4, glimpse_channels=(2,), glimpse_dim=6,
                    hidden_size=5, n_glimpses=2, location_sigma=0.2)
    agent = GlimpseAgent(cfg, seed=0).double().eval()
    gen = torch.Generator().manual_seed(weight_seed)
    with torch.no_grad():
        for m in agent.modules():
            if isinstance(m, torch.nn.Conv3d):
                fan = m.weight[0].numel()
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen,
                                           dtype=torch.float64) * (2.0 / fan) ** 0.5)
                m.bias.zero_()
            elif isinstance(m, torch.nn.BatchNorm3d):
                m.weight.fill_(0.1)
                m.bias.fill_(1.0)
            elif isinstance(m, torch.nn.Linear):
                fan = m.weight[0].numel()
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen,
                                           dtype=torch.float64) * (1.0 / fan) ** 0.5)
                m.bias.copy_(torch.randn(m.bias.shape, generator=gen,
                                         dtype=torch.float64) * 0.1)
            elif isinstance(m, torch.nn.LSTMCell):
                for p in m.parameters():
                    p.copy_(torch.randn(p.shape, generator=gen,
                                        dtype=torch.float64) * 0.3)

    x = torch.randn(2, 1, 8, 8, 8, dtype=torch.float64,
                    generator=torch.Generator().manual_seed(volume_seed))
    labels = torch.tensor([1.0, 0.0], dtype=torch.float64)
    locs = torch.tensor([[[0.0, 0.0, 0.0], [0.3, -0.2, 0.1]],
                         [[0.0, 0.0, 0.0], [-0.4, 0.25, -0.15]]],
                        dtype=torch.float64)
    rewards = torch.tensor([1.0, 0.0], dtype=torch.float64)

    margin = float("inf")
    with torch.no_grad():
        for t in range(cfg.n_glimpses):
            h = extract_glimpse_batch(x, locs[:, t, :], cfg.glimpse_side)
            mods = list(agent.glimpse_net.conv)
            for i in range(0, len(mods), 4):
                conv, bn, relu, pool = mods[i:i + 4]
                z = bn(conv(h))
                margin = min(margin, z.abs().min().item())
                a = relu(z)
                u = a.unfold(2, 2, 2).unfold(3, 2, 2).unfold(4, 2, 2)
                u = u.reshape(*a.shape[:2], -1, 8)
                top2 = u.topk(2, dim=-1).values
                margin = min(margin, (top2[..., 0] - top2[..., 1]).min().item())
                h = pool(a)
    return agent, x, labels, locs, rewards, margin


def transformer_grad_micro(weight_seed=113, volume_seed=1):
    """Frame-transformer miniature for finite differences.  Conv biases sit
    at 1.0 with small weight scales so rectifier inputs stay positive, and
    the chosen seeds maximize the smaller of the rectifier margin and the
    pool runner-up gap.  Returns (model, frames, target, margin).
    """
    from preclin.models.transformer import (FrameSequenceTransformer,
                                            TransformerConfig)

    cfg = TransformerConfig(n_frames=4, frame_size=8, d_model=8, n_heads=2,
                            ff_width=8, backbone_stages=((2,), (2,)))
    model = FrameSequenceTransformer(cfg, seed=0).double().eval()
    gen = torch.Generator().manual_seed(weight_seed)
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, torch.nn.Conv2d):
                fan = m.weight[0].numel()
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen,
                                           dtype=torch.float64) * 0.4 * fan ** -0.5)
                m.bias.fill_(1.0)
            elif isinstance(m, torch.nn.Linear):
                fan = m.weight[0].numel()
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen,
                                           dtype=torch.float64) * fan ** -0.5)
                m.bias.copy_(torch.randn(m.bias.shape, generator=gen,
                                         dtype=torch.float64) * 0.3)
        model.query.copy_(torch.randn(model.query.shape, generator=gen,
                                      dtype=torch.float64) * 0.3)

    frames = torch.randn(1, 4, 1, 8, 8, dtype=torch.float64,
                         generator=torch.Generator().manual_seed(volume_seed))
    target = torch.tensor([1])

    vals = {"m": float("inf")}
    hooks = []

    def relu_hook(mod, inp, out):
        vals["m"] = min(vals["m"], inp[0].abs().min().item())

    def pool_hook(mod, inp, out):
        a = inp[0]
        u = a.unfold(2, 2, 2).unfold(3, 2, 2).reshape(*a.shape[:2], -1, 4)
        top2 = u.topk(2, dim=-1).values
        vals["m"] = min(vals["m"], (top2[..., 0] - top2[..., 1]).min().item())

    for m in model.modules():
        if isinstance(m, torch.nn.ReLU):
            hooks.append(m.register_forward_hook(relu_hook))
        elif isinstance(m, torch.nn.MaxPool2d):
            hooks.append(m.register_forward_hook(pool_hook))
    with torch.no_grad():
        model.forward_logits(frames)
    for h in hooks:
        h.remove()
    return model, frames, target, vals["m"]
