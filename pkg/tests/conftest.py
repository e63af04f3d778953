"""Shared fixtures for the suite."""

from __future__ import annotations

import numpy as np
import pytest

from preclin.volume_io import SubjectRecord, VoxelVolume, write_volume

from helpers import REFERENCE_SUBJECTS, make_subject


@pytest.fixture
def reference_subjects() -> dict[str, SubjectRecord]:
    return {sid: make_subject(sid, **kw) for sid, kw in REFERENCE_SUBJECTS.items()}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def write_random_volume(path, shape=(6, 6, 6), seed=0) -> VoxelVolume:
    volume = VoxelVolume(
        voxels=np.random.default_rng(seed).normal(size=shape).astype(np.float32))
    write_volume(volume, path)
    return volume
