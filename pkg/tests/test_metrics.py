"""Confusion matrices and derived metrics against hand-computed values."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from preclin.errors import ConfigError
from preclin.metrics import ConfusionMatrix, confusion, metrics

# Reference evaluation tables for the three classifiers with their
# published headline metrics (percent accuracy printed to 2 decimals,
# the rest to 2 significant figures).
REFERENCE_TABLES = [
    # (tn, fp, fn, tp, accuracy%, precision, recall, f1, fn_rate)
    (99, 4, 15, 45, 88.34, 0.92, 0.75, 0.83, 0.25),
    (84, 3, 10, 42, 90.65, 0.93, 0.81, 0.87, 0.192),
    (87, 3, 12, 68, 91.18, 0.96, 0.85, 0.90, 0.15),
]


@pytest.mark.parametrize("tn,fp,fn,tp,acc,prec,rec,f1,fnr", REFERENCE_TABLES)
def test_reference_tables_reproduce_headline_metrics(tn, fp, fn, tp, acc,
                                                     prec, rec, f1, fnr):
    report = metrics(ConfusionMatrix(tn=tn, fp=fp, fn=fn, tp=tp))
    assert round(report.accuracy * 100, 2) == acc
    assert round(report.precision, 2) == prec
    assert round(report.recall, 2) == rec
    assert round(report.f1, 2) == f1
    assert round(report.fn_rate, 3) == round(fnr, 3)
    assert report.degenerate == ()


def test_metrics_exact_fractions():
    report = metrics(ConfusionMatrix(tn=99, fp=4, fn=15, tp=45))
    assert report.accuracy == 144 / 163
    assert report.precision == 45 / 49
    assert report.recall == 45 / 60
    assert report.f1 == 2 * 45 / (2 * 45 + 4 + 15)
    assert report.fn_rate == 15 / 60


def test_confusion_from_label_vectors():
    pred = [1, 0, 1, 1, 0, 0]
    true = [1, 0, 0, 1, 1, 0]
    cm = confusion(pred, true)
    assert (cm.tn, cm.fp, cm.fn, cm.tp) == (2, 1, 1, 2)
    assert cm.total == 6


def test_confusion_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        confusion([0, 1], [0])
    with pytest.raises(ConfigError):
        confusion([0, 2], [0, 1])
    with pytest.raises(ConfigError):
        confusion([[0, 1]], [[0, 1]])


def test_confusion_matrix_rejects_negative_counts():
    with pytest.raises(ConfigError):
        ConfusionMatrix(tn=-1, fp=0, fn=0, tp=0)


def test_metrics_empty_matrix_is_an_error():
    with pytest.raises(ConfigError):
        metrics(ConfusionMatrix(0, 0, 0, 0))


def test_degenerate_no_positive_predictions():
    report = metrics(ConfusionMatrix(tn=5, fp=0, fn=3, tp=0))
    assert report.precision == 0.0
    assert report.f1 == 0.0
    assert set(report.degenerate) == {"precision", "f1"}
    # recall is well-defined (and zero) here
    assert report.recall == 0.0
    assert "recall" not in report.degenerate


def test_degenerate_no_actual_positives():
    report = metrics(ConfusionMatrix(tn=5, fp=2, fn=0, tp=0))
    assert report.recall == 0.0
    assert report.fn_rate == 0.0
    assert {"recall", "fn_rate"} <= set(report.degenerate)


def test_as_dict_round_trip_fields():
    report = metrics(ConfusionMatrix(tn=1, fp=1, fn=1, tp=1))
    d = report.as_dict()
    assert set(d) == {"accuracy", "precision", "recall", "f1", "fn_rate",
                      "degenerate"}
    assert d["accuracy"] == 0.5


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 400), st.integers(0, 400),
       st.integers(0, 400), st.integers(1, 400))
def test_metric_identities(tn, fp, fn, tp):
    cm = ConfusionMatrix(tn=tn, fp=fp, fn=fn, tp=tp)
    report = metrics(cm)
    assert abs(report.recall + report.fn_rate - 1.0) < 1e-12
    assert abs(report.accuracy - (1.0 - (fp + fn) / cm.total)) < 1e-12
    assert 0.0 <= report.f1 <= 1.0
    if report.precision + report.recall > 0:
        expected = (2 * report.precision * report.recall
                    / (report.precision + report.recall))
        assert abs(report.f1 - expected) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50),
       st.integers(1, 50), st.integers(1, 500))
def test_f1_invariant_under_added_true_negatives(tn, fp, fn, tp, extra):
    base = metrics(ConfusionMatrix(tn=tn, fp=fp, fn=fn, tp=tp))
    padded = metrics(ConfusionMatrix(tn=tn + extra, fp=fp, fn=fn, tp=tp))
    assert abs(base.f1 - padded.f1) < 1e-12
    assert padded.accuracy >= base.accuracy


def test_confusion_accepts_numpy_arrays():
    cm = confusion(np.array([1, 0, 1]), np.array([1, 1, 1]))
    assert (cm.tp, cm.fn) == (2, 1)
