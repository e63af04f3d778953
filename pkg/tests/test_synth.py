"""Planted-lesion cohort generator: geometry, signal, timeline, ground truth."""

import json

import numpy as np
import pytest

from preclin.errors import ConfigError
from preclin.labeling import CLASS0, CLASS1, SCHEME_A, label_sessions
from preclin.synth import (LesionSpec, SynthSpec, _subject_timeline,
                           generate_cohort, generate_volume, lesion_mask,
                           roi_oracle, roi_score)
from preclin.volume_io import load_manifest, read_volume


def small_spec(**overrides) -> SynthSpec:
    base = dict(n_subjects=8, volume_side=16, seed=3)
    base.update(overrides)
    return SynthSpec(**base)


# --- lesion geometry ---------------------------------------------------------------

def test_scalar_radius_broadcasts():
    spec = LesionSpec(radius_fraction=0.12)
    assert spec.radius_fraction == (0.12, 0.12, 0.12)


def test_center_and_radii_in_voxels():
    spec = LesionSpec(offset_fraction=(0.0, 0.19, 0.19), radius_fraction=0.12)
    assert spec.center_voxel(64) == (31.5, 31.5 + 0.19 * 64, 31.5 + 0.19 * 64)
    assert spec.radii_voxels(64) == (7.68, 7.68, 7.68)


@pytest.mark.parametrize("kwargs", [
    dict(radius_fraction=0.5),
    dict(radius_fraction=0.0),
    dict(amplitude=-0.1),
    dict(sign=0.5),
    dict(offset_fraction=(0.1, 0.2)),
])
def test_lesion_validation(kwargs):
    with pytest.raises(ConfigError):
        LesionSpec(**kwargs)


def test_mask_matches_ellipsoid_inequality():
    spec = small_spec()
    mask = lesion_mask(spec)
    center = spec.lesion.center_voxel(16)
    radii = spec.lesion.radii_voxels(16)
    for z in range(16):
        for y in range(16):
            for x in range(16):
                d2 = sum(((v - c) / r) ** 2
                         for v, c, r in zip((z, y, x), center, radii))
                assert mask[z, y, x] == (d2 <= 1.0)
    assert mask.any() and not mask.all()


def test_mask_volume_approximates_ellipsoid():
    spec = SynthSpec(volume_side=64)
    r = spec.lesion.radii_voxels(64)
    want = 4.0 / 3.0 * np.pi * r[0] * r[1] * r[2]
    assert lesion_mask(spec).sum() == pytest.approx(want, rel=0.1)


# --- spec validation ------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(n_subjects=0),
    dict(sessions_per_subject=(3, 2)),
    dict(sessions_per_subject=(0, 2)),
    dict(visit_cadence_days=3),
    dict(conversion_prevalence=1.5),
    dict(volume_side=7),
    dict(noise_std=-0.1),
    dict(background_amplitude=-1.0),
])
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        small_spec(**kwargs)


def test_lesion_must_sit_strictly_interior():
    with pytest.raises(ConfigError):
        small_spec(lesion=LesionSpec(offset_fraction=(0.45, 0.0, 0.0)))


def test_lesion_accepts_plain_dict():
    spec = small_spec(lesion={"amplitude": 0.3})
    assert isinstance(spec.lesion, LesionSpec)
    assert spec.lesion.amplitude == 0.3


def test_from_dict_round_trip_and_unknown_keys():
    spec = SynthSpec.from_dict({"n_subjects": 5, "volume_side": 16,
                                "lesion": {"amplitude": 0.7}, "seed": 9})
    assert spec.n_subjects == 5 and spec.lesion.amplitude == 0.7
    with pytest.raises(ConfigError):
        SynthSpec.from_dict({"n_subjects": 5, "noise": 0.1})


# --- volume synthesis ------------------------------------------------------------------

def test_volume_shape_dtype_plane():
    vol = generate_volume(small_spec(), False, np.random.default_rng(0))
    assert vol.voxels.shape == (16, 16, 16)
    assert vol.voxels.dtype == np.float32
    assert vol.plane == "axial"


def test_volume_is_stream_deterministic():
    spec = small_spec()
    a = generate_volume(spec, True, np.random.default_rng(7))
    b = generate_volume(spec, True, np.random.default_rng(7))
    c = generate_volume(spec, True, np.random.default_rng(8))
    np.testing.assert_array_equal(a.voxels, b.voxels)
    assert not np.array_equal(a.voxels, c.voxels)


def test_noise_free_lesion_is_exact():
    spec = small_spec(noise_std=0.0, background_amplitude=0.0)
    mask = lesion_mask(spec)
    vol = generate_volume(spec, True, np.random.default_rng(1))
    np.testing.assert_array_equal(vol.voxels[mask], np.float32(-0.5))
    np.testing.assert_array_equal(vol.voxels[~mask], np.float32(0.0))
    clean = generate_volume(spec, False, np.random.default_rng(1))
    np.testing.assert_array_equal(clean.voxels, np.zeros((16, 16, 16)))


def test_negative_sign_raises_intensity():
    spec = small_spec(noise_std=0.0, background_amplitude=0.0,
                      lesion={"sign": -1.0, "amplitude": 0.4})
    vol = generate_volume(spec, True, np.random.default_rng(2))
    assert vol.voxels[lesion_mask(spec)].max() == pytest.approx(0.4)


def test_lesion_depth_equals_amplitude_over_matched_noise():
    spec = small_spec(lesion={"amplitude": 0.5})
    sick = generate_volume(spec, True, np.random.default_rng(11))
    well = generate_volume(spec, False, np.random.default_rng(11))
    diff = well.voxels.astype(np.float64) - sick.voxels
    mask = lesion_mask(spec)
    np.testing.assert_allclose(diff[mask], 0.5, atol=1e-5)
    np.testing.assert_allclose(diff[~mask], 0.0, atol=1e-5)


def test_zero_amplitude_erases_the_lesion():
    spec = small_spec(lesion={"amplitude": 0.0})
    sick = generate_volume(spec, True, np.random.default_rng(13))
    well = generate_volume(spec, False, np.random.default_rng(13))
    np.testing.assert_array_equal(sick.voxels, well.voxels)


# --- ROI oracle -----------------------------------------------------------------------

def test_roi_score_orders_lesioned_below_clean():
    spec = small_spec()
    rng = np.random.default_rng(17)
    sick = generate_volume(spec, True, rng)
    well = generate_volume(spec, False, rng)
    assert roi_score(sick, spec) > roi_score(well, spec)


def test_strong_lesion_separates_perfectly():
    spec = small_spec(noise_std=0.1, lesion={"amplitude": 0.5})
    rng = np.random.default_rng(19)
    vols = [generate_volume(spec, c, rng) for c in [True] * 20 + [False] * 20]
    auc = roi_oracle(vols, [1] * 20 + [0] * 20, spec)
    assert auc >= 0.95


def test_zero_amplitude_scores_at_chance():
    spec = small_spec(lesion={"amplitude": 0.0})
    rng = np.random.default_rng(23)
    vols = [generate_volume(spec, c, rng) for c in [True] * 100 + [False] * 100]
    auc = roi_oracle(vols, [1] * 100 + [0] * 100, spec)
    assert 0.3 < auc < 0.7


def test_roi_oracle_requires_both_classes():
    spec = small_spec()
    vol = generate_volume(spec, True, np.random.default_rng(29))
    with pytest.raises(ConfigError):
        roi_oracle([vol, vol], [1, 1], spec)


# --- timelines ------------------------------------------------------------------------

def test_converter_timeline_structure():
    spec = small_spec(visit_cadence_days=360)
    for seed in range(30):
        days, dx, scans = _subject_timeline(spec, True, np.random.default_rng(seed))
        assert dx[-1] == "ad_dementia"
        assert all(d == "cognitively_normal" for d in dx[:-1])
        assert days == [i * 360 for i in range(len(days))]
        lo, hi = spec.sessions_per_subject
        assert lo <= len(scans) <= hi
        assert scans == sorted(scans) and len(set(scans)) == len(scans)
        for day in scans:
            slot, jitter = divmod(day, 360)
            assert 0 <= jitter < 90
            # scans stop strictly before the conversion visit
            assert slot * 360 < days[-1]


def test_non_converter_timeline_is_all_normal():
    spec = small_spec()
    days, dx, scans = _subject_timeline(spec, False, np.random.default_rng(31))
    assert set(dx) == {"cognitively_normal"}
    assert len(days) == 2 * len(scans)


# --- cohort generation ---------------------------------------------------------------

def test_cohort_layout_and_truth(tmp_path):
    spec = small_spec(n_subjects=10, conversion_prevalence=0.5)
    truth = generate_cohort(spec, tmp_path / "cohort")
    records = load_manifest(truth.manifest_path)
    assert len(records) == 10
    assert len(truth.converter_ids) == 5
    assert truth.lesion_center_voxel == spec.lesion.center_voxel(16)

    n_sessions = 0
    for rec in records:
        for sess in rec.sessions:
            n_sessions += 1
            vol = read_volume(sess.volume_path)
            assert vol.voxels.shape == (16, 16, 16)
            want = "class1" if rec.subject_id in truth.converter_ids else "class0"
            assert truth.intended_for(rec.subject_id, sess.day) == want
    assert n_sessions == len(truth.intended)
    lo, hi = spec.sessions_per_subject
    assert 10 * lo <= n_sessions <= 10 * hi


def test_intended_labels_match_the_labeler(tmp_path):
    truth = generate_cohort(small_spec(n_subjects=12), tmp_path / "c")
    records = load_manifest(truth.manifest_path)
    decisions = label_sessions(records, scheme=SCHEME_A)
    assert decisions, "cohort produced no labeled sessions"
    for d in decisions:
        want = truth.intended_for(d.session.subject_id, d.session.day)
        assert d.label == (CLASS1 if want == "class1" else CLASS0)


def test_cohort_volumes_are_reproducible(tmp_path):
    spec = small_spec(n_subjects=6)
    t1 = generate_cohort(spec, tmp_path / "a")
    t2 = generate_cohort(spec, tmp_path / "b")
    assert t1.converter_ids == t2.converter_ids
    assert set(t1.intended) == set(t2.intended)
    r1, r2 = load_manifest(t1.manifest_path), load_manifest(t2.manifest_path)
    for a, b in zip(r1, r2):
        assert a.subject_id == b.subject_id
        assert [v.day for v in a.visits] == [v.day for v in b.visits]
        for sa, sb in zip(a.sessions, b.sessions):
            assert sa.day == sb.day
            np.testing.assert_array_equal(read_volume(sa.volume_path).voxels,
                                          read_volume(sb.volume_path).voxels)


def test_prevalence_extremes(tmp_path):
    none = generate_cohort(small_spec(conversion_prevalence=0.0),
                           tmp_path / "none")
    assert none.converter_ids == []
    assert set(none.intended.values()) == {"class0"}
    everyone = generate_cohort(small_spec(conversion_prevalence=1.0),
                               tmp_path / "all")
    assert len(everyone.converter_ids) == 8
    assert set(everyone.intended.values()) == {"class1"}


def test_lesion_separates_generated_cohort(tmp_path):
    spec = small_spec(n_subjects=10)
    truth = generate_cohort(spec, tmp_path / "c")
    vols, labels = [], []
    for rec in load_manifest(truth.manifest_path):
        for sess in rec.sessions:
            vols.append(read_volume(sess.volume_path))
            labels.append(1 if rec.subject_id in truth.converter_ids else 0)
    assert roi_oracle(vols, labels, spec) >= 0.95
