"""Person-disjoint splitting, class rebalancing, and balanced batching."""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import floor, sqrt

import numpy as np

from .errors import ConfigError, ContaminationError, ImbalanceError
from .labeling import CLASS1, LabelDecision
from .volume_io import SubjectRecord, VoxelVolume

SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.65, 0.20, 0.15)

MIRROR_AXES = (0, 1, 2)  # depth, height, width
ROTATION_PLANES = ((0, 1), (0, 2), (1, 2))


def person_disjoint_split(subjects: list[SubjectRecord] | list[str],
                          ratios: tuple[float, float, float] = DEFAULT_RATIOS,
                          seed: int = 0) -> dict[str, str]:
    """Assign each subject to exactly one of train/val/test.

    Counts follow the largest-remainder rounding of len(subjects) * ratio,
    so realized ratios are within one subject of the targets.  The
    assignment is a pure function of the sorted subject ids and the seed.
    """
    if len(ratios) != 3:
        raise ConfigError(f"need 3 ratios, got {len(ratios)}")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must be non-negative and sum to 1, got {ratios}")
    ids = sorted(s.subject_id if isinstance(s, SubjectRecord) else s for s in subjects)
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate subject ids")
    n = len(ids)
    if n < 3:
        raise ConfigError(f"need at least 3 subjects to split, got {n}")

    counts = [floor(n * r) for r in ratios]
    remainders = [n * r - c for r, c in zip(ratios, counts)]
    for _ in range(n - sum(counts)):
        i = max(range(3), key=lambda j: (remainders[j], -j))
        counts[i] += 1
        remainders[i] = -1.0

    order = list(np.random.default_rng(seed).permutation(n))
    assignment = {}
    cursor = 0
    for split, count in zip(SPLITS, counts):
        for k in order[cursor:cursor + count]:
            assignment[ids[k]] = split
        cursor += count
    return assignment


def ensure_person_disjoint(train_subjects, eval_subjects) -> None:
    """Hard guard against identity leakage between training and evaluation."""
    overlap = sorted(set(train_subjects) & set(eval_subjects))
    if overlap:
        raise ContaminationError(
            f"subjects present in both training and evaluation sets: {overlap}")


@dataclass(frozen=True)
class AugmentOp:
    """A right-angle geometric op: an axis mirror or an in-plane 90-degree turn."""

    kind: str  # "mirror" | "rotate90"
    axis: int | None = None       # mirror
    plane: tuple[int, int] | None = None  # rotate90
    turns: int = 1                # rotate90, quarter turns

    def __post_init__(self):
        if self.kind == "mirror":
            if self.axis not in MIRROR_AXES:
                raise ConfigError(f"mirror axis must be 0..2, got {self.axis}")
        elif self.kind == "rotate90":
            if self.plane not in ROTATION_PLANES:
                raise ConfigError(f"rotation plane must be one of {ROTATION_PLANES}")
            if self.turns % 4 == 0 or not 1 <= self.turns <= 3:
                raise ConfigError(f"turns must be 1..3, got {self.turns}")
        else:
            raise ConfigError(f"unknown augment kind {self.kind!r}")


def apply_augment(volume: VoxelVolume | np.ndarray, op: AugmentOp):
    """Apply a mirror or 90-degree rotation; intensity multiset is preserved."""
    is_volume = isinstance(volume, VoxelVolume)
    vox = volume.voxels if is_volume else np.asarray(volume)
    if op.kind == "mirror":
        out = np.flip(vox, axis=op.axis)
    else:
        a, b = op.plane
        if vox.shape[a] != vox.shape[b]:
            raise ConfigError(
                f"rotate90 requires square in-plane dims, got "
                f"{vox.shape[a]}x{vox.shape[b]} in plane {op.plane}")
        out = np.rot90(vox, k=op.turns, axes=op.plane)
    out = np.ascontiguousarray(out)
    if is_volume:
        return VoxelVolume(voxels=out, plane=volume.plane)
    return out


def random_augment_op(rng: np.random.Generator) -> AugmentOp:
    choice = int(rng.integers(0, len(MIRROR_AXES) + len(ROTATION_PLANES) * 3))
    if choice < len(MIRROR_AXES):
        return AugmentOp(kind="mirror", axis=MIRROR_AXES[choice])
    choice -= len(MIRROR_AXES)
    return AugmentOp(kind="rotate90",
                     plane=ROTATION_PLANES[choice // 3],
                     turns=choice % 3 + 1)


@dataclass(frozen=True)
class LabeledExample:
    """A labeled scan reference; augment=None means the raw volume."""

    subject_id: str
    session_day: int
    volume_path: str
    label: int
    reason: str
    augment: AugmentOp | None = None


def examples_from_decisions(decisions: list[LabelDecision],
                            plane: str | None = "axial") -> list[LabeledExample]:
    """Labeled (non-excluded) examples, optionally restricted to one plane."""
    examples = []
    for d in decisions:
        if d.label == "excluded":
            continue
        if plane is not None and d.session.plane != plane:
            continue
        examples.append(LabeledExample(
            subject_id=d.session.subject_id,
            session_day=d.session.day,
            volume_path=d.session.volume_path,
            label=1 if d.label == CLASS1 else 0,
            reason=d.reason,
        ))
    return examples


def rebalance_indices(labels, target_ratio: float = 1.0,
                      seed: int = 0) -> list[tuple[int, AugmentOp | None]]:
    """Index-level core of :func:`rebalance`.

    Returns (index, augment) pairs: class 0 subsampled uniformly (never
    replicated), every class-1 index kept once, and class-1 replicas
    carrying fresh random AugmentOps.  The common output size is the
    geometric mean of the class counts (scaled by the target
    class1:class0 ratio), so neither class moves more than necessary.
    """
    if target_ratio <= 0:
        raise ConfigError(f"target_ratio must be positive, got {target_ratio}")
    labels = np.asarray(labels)
    neg = np.flatnonzero(labels == 0)
    pos = np.flatnonzero(labels == 1)
    if len(neg) == 0 or len(pos) == 0:
        raise ImbalanceError(
            f"rebalance needs both classes, got {len(neg)} neg / {len(pos)} pos")
    if len(pos) / len(neg) >= target_ratio - 1e-12:
        # already at or past the target from the oversampling direction;
        # moving further would drop class-1 or fabricate class-0
        return [(int(i), None) for i in range(len(labels))]

    rng = np.random.default_rng(seed)
    n_neg_out = int(round(sqrt(len(neg) * len(pos) / target_ratio)))
    n_neg_out = max(1, min(n_neg_out, len(neg)))
    n_pos_out = max(len(pos), int(round(target_ratio * n_neg_out)))

    keep = sorted(rng.choice(len(neg), size=n_neg_out, replace=False).tolist())
    out: list[tuple[int, AugmentOp | None]] = [(int(neg[i]), None) for i in keep]
    out.extend((int(i), None) for i in pos)
    extra = n_pos_out - len(pos)
    source = rng.permutation(len(pos)).tolist()
    for k in range(extra):
        out.append((int(pos[source[k % len(pos)]]), random_augment_op(rng)))
    return out


def rebalance(examples: list[LabeledExample], target_ratio: float = 1.0,
              seed: int = 0) -> list[LabeledExample]:
    """Down-sample class 0 and over-sample class 1 toward a target count ratio.

    Every original class-1 example is retained at least once; replicas
    carry fresh random AugmentOps; class 0 is subsampled, never copied.
    """
    pairs = rebalance_indices([e.label for e in examples], target_ratio, seed)
    return [examples[i] if op is None else replace(examples[i], augment=op)
            for i, op in pairs]


def balanced_batch_sampler(labels, batch_size: int, seed: int = 0) -> list[list[int]]:
    """Index batches with equal class counts.

    One epoch walks the majority class exactly once; the minority class
    is reshuffled and recycled as needed, and no index repeats before
    the minority class has been consumed once.  Every batch holds
    batch_size/2 indices of each class except possibly the last, which
    is smaller but still split evenly.
    """
    labels = np.asarray(labels)
    if batch_size <= 0 or batch_size % 2 != 0:
        raise ConfigError(f"batch_size must be a positive even number, got {batch_size}")
    idx0 = np.flatnonzero(labels == 0)
    idx1 = np.flatnonzero(labels == 1)
    if len(idx0) == 0 or len(idx1) == 0:
        raise ImbalanceError(
            f"balanced batches need both classes, got {len(idx0)}/{len(idx1)}")

    rng = np.random.default_rng(seed)
    major, minor = (idx0, idx1) if len(idx0) >= len(idx1) else (idx1, idx0)
    major = major[rng.permutation(len(major))]
    half = batch_size // 2

    minor_stream: list[int] = []
    batches = []
    for start in range(0, len(major), half):
        chunk = major[start:start + half].tolist()
        while len(minor_stream) < len(chunk):
            minor_stream.extend(minor[rng.permutation(len(minor))].tolist())
        take, minor_stream = minor_stream[:len(chunk)], minor_stream[len(chunk):]
        batch = chunk + take
        rng.shuffle(batch)
        batches.append([int(i) for i in batch])
    return batches
