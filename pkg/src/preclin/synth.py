"""Synthetic longitudinal cohort with planted volumetric lesions.

Stands in for the access-restricted clinical dataset: converting
subjects progress from cognitively-normal visits to one ad_dementia
visit, their pre-conversion scans carry an ellipsoidal intensity
decrement at a known interior site, and non-converters scan clean.
The known geometry gives every downstream stage a ground-truth oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.metrics import roc_auc_score

from .errors import ConfigError
from .volume_io import (ClinicalVisit, ScanSession, SubjectRecord,
                        VoxelVolume, write_manifest, write_volume)


def _as_triple(value, name) -> tuple[float, float, float]:
    if isinstance(value, (int, float)):
        return (float(value),) * 3
    out = tuple(float(v) for v in value)
    if len(out) != 3:
        raise ConfigError(f"{name} needs 1 or 3 components, got {value!r}")
    return out


@dataclass(frozen=True)
class LesionSpec:
    # offsets and radii are fractions of the volume side, offset measured
    # from the volume center
    offset_fraction: tuple[float, float, float] = (0.0, 0.19, 0.19)
    radius_fraction: tuple[float, float, float] = 0.12
    amplitude: float = 0.5
    sign: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "offset_fraction",
                           _as_triple(self.offset_fraction, "offset_fraction"))
        object.__setattr__(self, "radius_fraction",
                           _as_triple(self.radius_fraction, "radius_fraction"))
        if any(not 0 < r < 0.5 for r in self.radius_fraction):
            raise ConfigError(
                f"radius_fraction must be in (0, 0.5), got {self.radius_fraction}")
        if self.amplitude < 0:
            raise ConfigError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.sign not in (-1.0, 1.0):
            raise ConfigError(f"sign must be +1 or -1, got {self.sign}")

    def center_voxel(self, side: int) -> tuple[float, float, float]:
        half = (side - 1) / 2.0
        return tuple(half + off * side for off in self.offset_fraction)

    def radii_voxels(self, side: int) -> tuple[float, float, float]:
        return tuple(r * side for r in self.radius_fraction)


@dataclass(frozen=True)
class SynthSpec:
    n_subjects: int = 60
    sessions_per_subject: tuple[int, int] = (2, 3)
    visit_cadence_days: int = 360
    conversion_prevalence: float = 0.5
    volume_side: int = 64
    lesion: LesionSpec = LesionSpec()
    noise_std: float = 0.1
    background_amplitude: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.lesion, dict):
            object.__setattr__(self, "lesion", LesionSpec(**self.lesion))
        object.__setattr__(self, "sessions_per_subject",
                           tuple(int(v) for v in self.sessions_per_subject))
        if self.n_subjects < 1:
            raise ConfigError("n_subjects must be >= 1")
        lo, hi = self.sessions_per_subject
        if not 1 <= lo <= hi:
            raise ConfigError(
                f"bad sessions_per_subject range {self.sessions_per_subject}")
        if self.visit_cadence_days < 4:
            raise ConfigError("visit_cadence_days must be >= 4")
        if not 0.0 <= self.conversion_prevalence <= 1.0:
            raise ConfigError(
                f"conversion_prevalence must be in [0, 1], "
                f"got {self.conversion_prevalence}")
        if self.volume_side < 8:
            raise ConfigError("volume_side must be >= 8")
        if self.noise_std < 0 or self.background_amplitude < 0:
            raise ConfigError("noise_std and background_amplitude must be >= 0")
        center = self.lesion.center_voxel(self.volume_side)
        radii = self.lesion.radii_voxels(self.volume_side)
        for c, r in zip(center, radii):
            if c - r < 1 or c + r > self.volume_side - 2:
                raise ConfigError(
                    f"lesion (center {center}, radii {radii}) is not strictly "
                    f"interior to a {self.volume_side}^3 volume")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        known = {"n_subjects", "sessions_per_subject", "visit_cadence_days",
                 "conversion_prevalence", "volume_side", "lesion", "noise_std",
                 "background_amplitude", "seed"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown synth spec keys {sorted(unknown)}")
        return cls(**data)


def lesion_mask(spec: SynthSpec) -> np.ndarray:
    """Boolean mask of the planted ellipsoid."""
    side = spec.volume_side
    center = spec.lesion.center_voxel(side)
    radii = spec.lesion.radii_voxels(side)
    grids = np.ogrid[0:side, 0:side, 0:side]
    dist2 = sum(((g - c) / r) ** 2 for g, c, r in zip(grids, center, radii))
    return dist2 <= 1.0


def generate_volume(spec: SynthSpec, is_preclinical: bool,
                    rng: np.random.Generator) -> VoxelVolume:
    """Low-frequency background + Gaussian noise, minus the lesion if any."""
    side = spec.volume_side
    idx = np.arange(side, dtype=np.float64)
    vox = np.zeros((side, side, side), dtype=np.float64)
    # three axis-aligned cosine components with random frequency and phase
    freqs = rng.uniform(0.5, 1.5, size=3)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    waves = [np.cos(2.0 * np.pi * f * idx / side + p)
             for f, p in zip(freqs, phases)]
    vox += (spec.background_amplitude / 3.0) * (
        waves[0][:, None, None] + waves[1][None, :, None] + waves[2][None, None, :])
    vox += rng.normal(0.0, spec.noise_std, size=vox.shape)
    if is_preclinical and spec.lesion.amplitude > 0:
        vox[lesion_mask(spec)] -= spec.lesion.sign * spec.lesion.amplitude
    return VoxelVolume(voxels=vox.astype(np.float32), plane="axial")


@dataclass
class CohortTruth:
    """Generator-side ground truth for a synthetic cohort."""
    manifest_path: str
    # (subject_id, session_day) -> "class0" | "class1"
    intended: dict[tuple[str, int], str]
    lesion_center_voxel: tuple[float, float, float]
    converter_ids: list[str]

    def intended_for(self, subject_id: str, day: int) -> str:
        return self.intended[(subject_id, day)]


def _subject_timeline(spec: SynthSpec, converts: bool,
                      rng: np.random.Generator):
    """Visit days/diagnoses plus scan days near distinct pre-conversion visits."""
    lo, hi = spec.sessions_per_subject
    n_scans = int(rng.integers(lo, hi + 1))
    cadence = spec.visit_cadence_days
    n_slots = 2 * n_scans
    if converts:
        # conversion lands uniformly in the back half of the planned slots,
        # so every scan slot before it stays cognitively normal
        k = int(rng.integers(n_slots // 2, n_slots))
        visit_days = [i * cadence for i in range(k)]
        diagnoses = ["cognitively_normal"] * k
        visit_days.append(k * cadence)
        diagnoses.append("ad_dementia")
        scan_slots = sorted(rng.choice(k, size=n_scans, replace=False))
    else:
        visit_days = [i * cadence for i in range(n_slots)]
        diagnoses = ["cognitively_normal"] * n_slots
        scan_slots = sorted(rng.choice(n_slots, size=n_scans, replace=False))
    # jitter below cadence/4 keeps closest-visit matching on the home visit
    scan_days = [int(s * cadence + rng.integers(0, max(cadence // 4, 1)))
                 for s in scan_slots]
    return visit_days, diagnoses, scan_days


def generate_cohort(spec: SynthSpec, out_dir: str | Path) -> CohortTruth:
    """Write volumes plus a manifest under ``out_dir``; return ground truth."""
    out_dir = Path(out_dir)
    vol_dir = out_dir / "volumes"
    vol_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    n_convert = int(round(spec.conversion_prevalence * spec.n_subjects))
    converter_idx = set(
        rng.choice(spec.n_subjects, size=n_convert, replace=False).tolist())
    streams = [np.random.default_rng(s)
               for s in np.random.SeedSequence(spec.seed).spawn(spec.n_subjects)]

    records = []
    intended: dict[tuple[str, int], str] = {}
    converter_ids = []
    for i in range(spec.n_subjects):
        subject_id = f"S{i:04d}"
        converts = i in converter_idx
        if converts:
            converter_ids.append(subject_id)
        sub_rng = streams[i]
        visit_days, diagnoses, scan_days = _subject_timeline(
            spec, converts, sub_rng)
        visits = [ClinicalVisit(subject_id=subject_id, day=d, diagnosis=dx)
                  for d, dx in zip(visit_days, diagnoses)]
        sessions = []
        for day in scan_days:
            volume = generate_volume(spec, is_preclinical=converts, rng=sub_rng)
            base = vol_dir / f"{subject_id}_d{day:05d}"
            write_volume(volume, base)
            sessions.append(ScanSession(subject_id=subject_id, day=day,
                                        volume_path=str(base), plane="axial"))
            intended[(subject_id, day)] = "class1" if converts else "class0"
        records.append(SubjectRecord(subject_id=subject_id, visits=visits,
                                     sessions=sessions))

    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(records, manifest_path)
    return CohortTruth(manifest_path=str(manifest_path), intended=intended,
                       lesion_center_voxel=spec.lesion.center_voxel(
                           spec.volume_side),
                       converter_ids=sorted(converter_ids))


def roi_score(volume: VoxelVolume, spec: SynthSpec) -> float:
    """Score increasing with lesion evidence: signed drop of the ROI mean."""
    mask = lesion_mask(spec)
    return float(spec.lesion.sign * -np.mean(volume.voxels[mask]))


def roi_oracle(volumes: list[VoxelVolume], labels, spec: SynthSpec) -> float:
    """AUC of the true-ROI mean-intensity classifier; learned models are
    compared against this upper-bound reference."""
    labels = np.asarray(labels)
    if set(np.unique(labels)) != {0, 1}:
        raise ConfigError("roi_oracle needs both classes present")
    scores = [roi_score(v, spec) for v in volumes]
    return float(roc_auc_score(labels, scores))
