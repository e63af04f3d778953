"""On-disk volume format and longitudinal cohort manifests.

Volumes are stored as a ``<path>.json`` sidecar describing shape and
encoding plus a ``<path>.raw`` blob of little-endian float32 voxels,
row-major with depth outermost.  Manifests are JSON Lines with one
``visit`` or ``scan`` record per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError, VolumeFormatError

PLANES = ("axial", "sagittal")
DIAGNOSES = (
    "cognitively_normal",
    "ad_dementia",
    "uncertain_dementia",
    "non_ad_dementia",
    "other",
)

_SIDECAR_ORDER = "row-major-depth-outer"
_SIDECAR_DTYPE = "float32"
_SIDECAR_ENDIAN = "little"


@dataclass
class VoxelVolume:
    """A 3D scalar intensity grid, shape (depth, height, width)."""

    voxels: np.ndarray
    plane: str = "axial"

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=np.float32)
        if vox.ndim != 3:
            raise VolumeFormatError(f"expected 3 dims, got {vox.ndim}")
        if any(s <= 0 for s in vox.shape):
            raise VolumeFormatError(f"non-positive shape {vox.shape}")
        if not np.all(np.isfinite(vox)):
            raise VolumeFormatError("volume contains non-finite intensities")
        if self.plane not in PLANES:
            raise VolumeFormatError(f"unknown plane {self.plane!r}")
        self.voxels = vox

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.voxels.shape)


def write_volume(volume: VoxelVolume, path: str | Path) -> None:
    """Write ``<path>.json`` + ``<path>.raw`` for a volume."""
    path = Path(path)
    sidecar = {
        "shape": list(volume.shape),
        "dtype": _SIDECAR_DTYPE,
        "order": _SIDECAR_ORDER,
        "endianness": _SIDECAR_ENDIAN,
        "plane": volume.plane,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))
    blob = np.ascontiguousarray(volume.voxels, dtype="<f4").tobytes()
    path.with_suffix(path.suffix + ".raw").write_bytes(blob)


def read_volume(path: str | Path) -> VoxelVolume:
    """Read a volume written by :func:`write_volume`.

    Raises VolumeFormatError when the sidecar shape is invalid, the raw
    byte length disagrees with it, or the data is non-finite.
    """
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    raw_path = path.with_suffix(path.suffix + ".raw")
    try:
        sidecar = json.loads(sidecar_path.read_text())
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"bad sidecar {sidecar_path}: {exc}") from exc

    shape = sidecar.get("shape")
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or not all(isinstance(s, int) and s > 0 for s in shape)
    ):
        raise VolumeFormatError(f"invalid shape {shape!r} in {sidecar_path}")
    if sidecar.get("dtype") != _SIDECAR_DTYPE or sidecar.get("endianness") != _SIDECAR_ENDIAN:
        raise VolumeFormatError(f"unsupported encoding in {sidecar_path}")

    blob = raw_path.read_bytes()
    expected = 4 * shape[0] * shape[1] * shape[2]
    if len(blob) != expected:
        raise VolumeFormatError(
            f"{raw_path}: expected {expected} bytes for shape {shape}, got {len(blob)}"
        )
    vox = np.frombuffer(blob, dtype="<f4").reshape(shape)
    if not np.all(np.isfinite(vox)):
        raise VolumeFormatError(f"{raw_path}: non-finite voxel values")
    return VoxelVolume(voxels=vox.copy(), plane=sidecar.get("plane", "axial"))


@dataclass(frozen=True)
class ClinicalVisit:
    subject_id: str
    day: int
    diagnosis: str


@dataclass(frozen=True)
class ScanSession:
    subject_id: str
    day: int
    volume_path: str
    plane: str = "axial"


@dataclass
class SubjectRecord:
    """All visits and scan sessions of one subject, each sorted by day."""

    subject_id: str
    visits: list[ClinicalVisit] = field(default_factory=list)
    sessions: list[ScanSession] = field(default_factory=list)


def _require(cond: bool, message: str, line: int) -> None:
    if not cond:
        raise ManifestError(message, line=line)


def _parse_day(record: dict, line: int) -> int:
    day = record.get("day")
    _require(isinstance(day, int) and not isinstance(day, bool) and day >= 0,
             f"day must be a non-negative integer, got {day!r}", line)
    return day


def load_manifest(path: str | Path) -> list[SubjectRecord]:
    """Parse a JSON Lines cohort manifest into SubjectRecords.

    Output is canonical: subjects sorted by id, visits and sessions
    sorted by day, independent of input line order.
    """
    visits: dict[str, list[ClinicalVisit]] = {}
    sessions: dict[str, list[ScanSession]] = {}

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed JSON ({exc.msg})", line=lineno) from exc
            kind = record.get("kind")
            subject = record.get("subject_id")
            _require(isinstance(subject, str) and subject != "",
                     "missing subject_id", lineno)
            day = _parse_day(record, lineno)
            if kind == "visit":
                diagnosis = record.get("diagnosis")
                _require(diagnosis in DIAGNOSES,
                         f"unknown diagnosis {diagnosis!r}", lineno)
                visits.setdefault(subject, []).append(
                    ClinicalVisit(subject_id=subject, day=day, diagnosis=diagnosis)
                )
            elif kind == "scan":
                volume_path = record.get("volume_path")
                _require(isinstance(volume_path, str) and volume_path != "",
                         "missing volume_path", lineno)
                plane = record.get("plane", "axial")
                _require(plane in PLANES, f"unknown plane {plane!r}", lineno)
                sessions.setdefault(subject, []).append(
                    ScanSession(subject_id=subject, day=day,
                                volume_path=volume_path, plane=plane)
                )
            else:
                raise ManifestError(f"unknown record kind {kind!r}", line=lineno)

    for subject in sessions:
        if subject not in visits:
            raise ManifestError(
                f"scan references subject {subject!r} with no visits")

    records = []
    for subject in sorted(visits):
        subject_visits = sorted(visits[subject], key=lambda v: v.day)
        days = [v.day for v in subject_visits]
        if len(set(days)) != len(days):
            raise ManifestError(f"duplicate visit day for subject {subject!r}")
        subject_sessions = sorted(
            sessions.get(subject, []), key=lambda s: (s.day, s.volume_path))
        keys = [(s.subject_id, s.day, s.volume_path) for s in subject_sessions]
        if len(set(keys)) != len(keys):
            raise ManifestError(f"duplicate scan session for subject {subject!r}")
        records.append(SubjectRecord(
            subject_id=subject, visits=subject_visits, sessions=subject_sessions))
    return records


def write_manifest(records: list[SubjectRecord], path: str | Path) -> None:
    """Emit subjects back to manifest JSON Lines (canonical order)."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in sorted(records, key=lambda r: r.subject_id):
            for visit in record.visits:
                fh.write(json.dumps({
                    "kind": "visit",
                    "subject_id": visit.subject_id,
                    "day": visit.day,
                    "diagnosis": visit.diagnosis,
                }) + "\n")
            for session in record.sessions:
                fh.write(json.dumps({
                    "kind": "scan",
                    "subject_id": session.subject_id,
                    "day": session.day,
                    "volume_path": session.volume_path,
                    "plane": session.plane,
                }) + "\n")
