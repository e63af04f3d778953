"""Training loops, checkpoint plumbing, and evaluation reports.

The three model kinds share one loop: balanced batches over the
(rebalanced) training split, per-epoch validation, and best-val-F1
checkpoint selection.  Evaluation is deterministic (eval mode,
non-stochastic rollouts) and refuses test subjects seen in training.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoints import load_checkpoint, save_checkpoint
from .dataset import (LabeledExample, apply_augment, balanced_batch_sampler,
                      ensure_person_disjoint, examples_from_decisions,
                      rebalance)
from .errors import ConfigError
from .labeling import SCHEME_A, SCHEMES, label_sessions, lead_time_days
from .metrics import confusion, metrics
from .models.cnn3d import Cnn3dConfig, VolumeCnn3d
from .models.rvn import GlimpseAgent, RvnConfig, agent_loss
from .models.transformer import FrameSequenceTransformer, TransformerConfig
from .optim import DEFAULT_EPOCHS, OptimizerSpec, default_optimizer_spec, make_optimizer
from .preprocess import preprocess_volume, resize_slice, select_frames, standardize
from .volume_io import SubjectRecord, read_volume

MODEL_KINDS = ("cnn3d", "rvn", "transformer")


@dataclass(frozen=True)
class TrainConfig:
    model: str
    epochs: int
    batch_size: int = 8
    seed: int = 0
    optimizer: OptimizerSpec | None = None
    scheme: str = SCHEME_A

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.model!r}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise ConfigError(
                f"batch_size must be even and >= 2, got {self.batch_size}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.optimizer is None:
            object.__setattr__(self, "optimizer",
                               default_optimizer_spec(self.model))

    def as_dict(self) -> dict:
        return {"model": self.model, "epochs": self.epochs,
                "batch_size": self.batch_size, "seed": self.seed,
                "optimizer": self.optimizer.as_dict(), "scheme": self.scheme}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {"model", "epochs", "batch_size", "seed", "optimizer", "scheme"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown train config keys {sorted(unknown)}")
        if "model" not in data or "epochs" not in data:
            raise ConfigError("train config needs at least model and epochs")
        data = dict(data)
        if "optimizer" in data and data["optimizer"] is not None:
            data["optimizer"] = OptimizerSpec.from_dict(data["optimizer"])
        return cls(**data)


def default_train_config(model_kind: str, **overrides) -> TrainConfig:
    cfg = TrainConfig(model=model_kind, epochs=DEFAULT_EPOCHS[model_kind])
    return replace(cfg, **overrides) if overrides else cfg


# --- model construction and config round-trips ------------------------------

_CONFIG_TYPES = {"cnn3d": Cnn3dConfig, "rvn": RvnConfig,
                 "transformer": TransformerConfig}


def default_model_config(kind: str):
    if kind not in _CONFIG_TYPES:
        raise ConfigError(f"unknown model kind {kind!r}")
    return _CONFIG_TYPES[kind]()


def model_config_to_dict(config) -> dict:
    return asdict(config)


def model_config_from_dict(kind: str, data: dict):
    """Rebuild a model config from JSON data (lists become tuples)."""
    if kind not in _CONFIG_TYPES:
        raise ConfigError(f"unknown model kind {kind!r}")
    cls = _CONFIG_TYPES[kind]
    fields = {f.name for f in cls.__dataclass_fields__.values()}
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"unknown {kind} config keys {sorted(unknown)}")

    def tup(v):
        if isinstance(v, list):
            return tuple(tup(x) for x in v)
        return v

    return cls(**{k: tup(v) for k, v in data.items()})


def build_model(kind: str, model_config=None, seed: int = 0) -> torch.nn.Module:
    if model_config is None:
        model_config = default_model_config(kind)
    if kind == "cnn3d":
        return VolumeCnn3d(model_config, seed=seed)
    if kind == "rvn":
        return GlimpseAgent(model_config, seed=seed)
    if kind == "transformer":
        return FrameSequenceTransformer(model_config, seed=seed)
    raise ConfigError(f"unknown model kind {kind!r}")


# --- volume encoding --------------------------------------------------------

def encode_volume(kind: str, model_config, volume) -> torch.Tensor:
    """Model-ready tensor for one volume: (1,d,h,w) or (n_frames,1,s,s)."""
    if kind == "cnn3d":
        prepared = preprocess_volume(volume, model_config.input_shape)
        return torch.from_numpy(prepared.voxels).unsqueeze(0)
    if kind == "rvn":
        prepared = preprocess_volume(volume, volume.shape)
        return torch.from_numpy(prepared.voxels).unsqueeze(0)
    if kind == "transformer":
        frames = select_frames(volume, model_config.n_frames)
        size = model_config.frame_size
        stack = np.stack([resize_slice(f, size, size) for f in frames])
        stack = standardize(stack).astype(np.float32)
        return torch.from_numpy(stack).unsqueeze(1)
    raise ConfigError(f"unknown model kind {kind!r}")


def encode_examples(kind: str, model_config,
                    examples: list[LabeledExample]) -> tuple[torch.Tensor, np.ndarray]:
    """Load, augment, and encode a list of examples into one stacked tensor."""
    xs, ys = [], []
    for ex in examples:
        volume = read_volume(ex.volume_path)
        if ex.augment is not None:
            volume = apply_augment(volume, ex.augment)
        xs.append(encode_volume(kind, model_config, volume))
        ys.append(ex.label)
    if not xs:
        raise ConfigError("no examples to encode")
    return torch.stack(xs), np.asarray(ys, dtype=np.int64)


# --- the shared loop --------------------------------------------------------

def _batch_loss(kind: str, model, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    if kind == "cnn3d":
        return F.binary_cross_entropy_with_logits(
            model.forward_logits(x), y.to(x.dtype))
    if kind == "rvn":
        probs, _, log_probs, baselines = model.rollout(x)
        return agent_loss(probs, y, log_probs, baselines)["total"]
    return F.cross_entropy(model.forward_logits(x), y.long())


def predict_probs(kind: str, model, x: torch.Tensor,
                  batch_size: int = 8) -> np.ndarray:
    """Deterministic class-1 probabilities (eval mode, greedy rollouts)."""
    model.eval()
    out = []
    with torch.no_grad():
        for start in range(0, x.shape[0], batch_size):
            xb = x[start:start + batch_size]
            if kind == "cnn3d":
                out.append(model(xb))
            elif kind == "rvn":
                out.append(model.rollout(xb, stochastic=False)[0])
            else:
                out.append(model(xb)[:, 1])
    return torch.cat(out).numpy().astype(np.float64)


@dataclass
class TrainResult:
    model: torch.nn.Module
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_f1: float = 0.0
    train_subjects: list[str] = field(default_factory=list)
    val_subjects: list[str] = field(default_factory=list)


def train_model(kind: str, model, x_train: torch.Tensor, y_train: np.ndarray,
                x_val: torch.Tensor, y_val: np.ndarray,
                config: TrainConfig) -> TrainResult:
    """Run the loop; the returned model carries the best-val-F1 weights."""
    torch.manual_seed(config.seed)
    optimizer = make_optimizer(config.optimizer, model.parameters())
    sampler_rng = np.random.default_rng(config.seed)

    history = []
    best_state = copy.deepcopy(model.state_dict())
    best_f1, best_epoch = -1.0, 0
    for epoch in range(1, config.epochs + 1):
        model.train()
        batches = balanced_batch_sampler(
            y_train, config.batch_size, seed=int(sampler_rng.integers(2 ** 31)))
        losses = []
        for batch in batches:
            xb = x_train[batch]
            yb = torch.from_numpy(y_train[batch])
            loss = _batch_loss(kind, model, xb, yb)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))

        val_probs = predict_probs(kind, model, x_val, config.batch_size)
        report = metrics(confusion((val_probs >= 0.5).astype(int), y_val))
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses)),
                 "val_f1": report.f1, "val_accuracy": report.accuracy,
                 "val_recall": report.recall, "val_precision": report.precision}
        history.append(entry)
        if report.f1 > best_f1:
            best_f1, best_epoch = report.f1, epoch
            best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    return TrainResult(model=model, history=history, best_epoch=best_epoch,
                       best_val_f1=best_f1)


# --- pipeline: manifest in, checkpoint out ----------------------------------

def split_examples(subjects: list[SubjectRecord], split_map: dict[str, str],
                   scheme: str = SCHEME_A) -> dict[str, list[LabeledExample]]:
    """Label every session and bucket the usable examples by split."""
    missing = [s.subject_id for s in subjects if s.subject_id not in split_map]
    if missing:
        raise ConfigError(f"subjects missing from split map: {missing}")
    decisions = label_sessions(subjects, scheme)
    examples = examples_from_decisions(decisions)
    out = {"train": [], "val": [], "test": []}
    for ex in examples:
        out[split_map[ex.subject_id]].append(ex)
    return out


def train_pipeline(subjects: list[SubjectRecord], split_map: dict[str, str],
                   config: TrainConfig, model_config=None,
                   rebalance_train: bool = True) -> TrainResult:
    """Label, rebalance, encode, and train from manifest-level inputs."""
    buckets = split_examples(subjects, split_map, config.scheme)
    train_ex, val_ex = buckets["train"], buckets["val"]
    if not train_ex or not val_ex:
        raise ConfigError(
            f"empty split: {len(train_ex)} train / {len(val_ex)} val examples")
    ensure_person_disjoint([e.subject_id for e in train_ex],
                           [e.subject_id for e in val_ex])
    if rebalance_train:
        train_ex = rebalance(train_ex, target_ratio=1.0, seed=config.seed)
    if model_config is None:
        model_config = default_model_config(config.model)

    x_train, y_train = encode_examples(config.model, model_config, train_ex)
    x_val, y_val = encode_examples(config.model, model_config, val_ex)
    model = build_model(config.model, model_config, seed=config.seed)
    result = train_model(config.model, model, x_train, y_train,
                         x_val, y_val, config)
    result.train_subjects = sorted({e.subject_id for e in train_ex})
    result.val_subjects = sorted({e.subject_id for e in val_ex})
    return result


def save_model_checkpoint(path, result: TrainResult, config: TrainConfig,
                          model_config) -> None:
    header = {
        "kind": config.model,
        "config": model_config_to_dict(model_config),
        "train_config": config.as_dict(),
        "seed": config.seed,
        "epoch": result.best_epoch,
        "train_subjects": result.train_subjects,
        "val_subjects": result.val_subjects,
    }
    save_checkpoint(path, result.model, header)


def load_model_checkpoint(path) -> tuple[torch.nn.Module, dict]:
    header, state = load_checkpoint(path)
    kind = header.get("kind")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"checkpoint kind {kind!r} is not a model")
    model_config = model_config_from_dict(kind, header.get("config", {}))
    model = build_model(kind, model_config, seed=int(header.get("seed", 0)))
    model.load_state_dict(state)
    model.eval()
    return model, header


# --- evaluation --------------------------------------------------------------

def evaluate_model(model, kind: str, model_config,
                   subjects: list[SubjectRecord],
                   test_examples: list[LabeledExample],
                   train_subjects) -> dict:
    """Deterministic test-set report with a lead-time table for true positives.

    Raises ContaminationError when any test subject was seen in training.
    """
    ensure_person_disjoint(train_subjects,
                           [e.subject_id for e in test_examples])
    if not test_examples:
        raise ConfigError("no test examples to evaluate")
    x, y = encode_examples(kind, model_config, test_examples)
    probs = predict_probs(kind, model, x)
    preds = (probs >= 0.5).astype(int)
    cm = confusion(preds, y)
    report = metrics(cm)

    by_id = {s.subject_id: s for s in subjects}
    predictions, lead_rows = [], []
    for ex, prob, pred in zip(test_examples, probs, preds):
        predictions.append({
            "subject_id": ex.subject_id, "session_day": ex.session_day,
            "volume_path": ex.volume_path, "label": int(ex.label),
            "probability": float(prob), "prediction": int(pred),
        })
        if ex.label == 1 and pred == 1:
            subject = by_id[ex.subject_id]
            session = next(s for s in subject.sessions
                           if s.day == ex.session_day
                           and s.volume_path == ex.volume_path)
            lead = lead_time_days(subject, session)
            lead_rows.append({
                "subject_id": ex.subject_id, "session_day": ex.session_day,
                "lead_to_first_uncertain": lead.to_first_uncertain,
                "lead_to_first_ad": lead.to_first_ad,
            })
    return {
        "confusion": {"tn": cm.tn, "fp": cm.fp, "fn": cm.fn, "tp": cm.tp},
        "metrics": report.as_dict(),
        "predictions": predictions,
        "lead_times": lead_rows,
    }
