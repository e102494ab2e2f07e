"""
Platt scaling and expected calibration error.

Covers:
1. Smoothed targets
2. Recovering known Platt coefficients from simulated scores
3. Calibration lowering the ECE of an over-confident scorer
4. Degenerate validation splits
5. Reliability rows built on the equal-width calibration curve, right-closed bins
6. Identical scores calibrate to the empirical positive rate
"""

import numpy as np
import pytest
from scipy.special import expit
from sklearn.calibration import calibration_curve

from calibration import (
    N_BINS,
    _smoothed_targets,
    expected_calibration_error,
    platt_fit,
    platt_fit_scores,
    reliability_table,
)
from dataset import Dataset
from errors import CalibrationError
from predictor import apply_calibration, build
from tests.helpers import TINY, synthetic_records


def test_smoothed_targets():
    labels = np.array([1.0, 1.0, 0.0, 1.0, 0.0])
    t = _smoothed_targets(labels)
    assert t[0] == pytest.approx(4.0 / 5.0)
    assert t[2] == pytest.approx(1.0 / 4.0)


def test_recovers_known_coefficients(rng):
    scores = rng.normal(scale=2.0, size=20000)
    labels = (rng.random(20000) < expit(1.5 * scores - 0.5)).astype(float)
    calib = platt_fit_scores(scores, labels)
    # p = 1 / (1 + exp(A s + B)), so A = -1.5 and B = 0.5
    assert calib.A == pytest.approx(-1.5, abs=0.1)
    assert calib.B == pytest.approx(0.5, abs=0.1)


def test_calibration_lowers_ece(rng):
    scores = rng.normal(scale=3.0, size=5000)
    labels = (rng.random(5000) < expit(0.4 * scores)).astype(float)
    before = expected_calibration_error(expit(scores), labels)
    after = expected_calibration_error(apply_calibration(scores, platt_fit_scores(scores, labels)), labels)
    assert after < before
    assert after < 0.05


def test_single_class_and_empty_splits_raise():
    with pytest.raises(CalibrationError):
        platt_fit_scores(np.array([0.1, 0.2]), np.array([1.0, 1.0]))
    with pytest.raises(CalibrationError):
        platt_fit_scores(np.array([]), np.array([]))


def test_ece_known_values():
    assert expected_calibration_error(np.full(10, 0.2), np.array([1, 1] + [0] * 8)) == pytest.approx(0.0)
    assert expected_calibration_error(np.full(4, 0.9), np.zeros(4)) == pytest.approx(0.9)
    assert expected_calibration_error([], []) == 0.0


def test_ece_puts_probability_one_in_last_bin():
    assert expected_calibration_error(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == pytest.approx(0.0)


def test_reliability_table_rows():
    probs = np.array([0.05, 0.07, 0.55, 0.95])
    rows = reliability_table(probs, np.array([0.0, 1.0, 1.0, 1.0]))
    assert len(rows) == N_BINS
    assert sum(r["count"] for r in rows) == 4
    assert rows[0]["count"] == 2 and rows[0]["accuracy"] == pytest.approx(0.5)
    assert rows[0]["confidence"] == pytest.approx(0.06)
    assert rows[3]["count"] == 0 and rows[3]["accuracy"] is None


def test_platt_fit_on_model_scores():
    validation = Dataset(synthetic_records(2, 30, seed=4))
    calib = platt_fit(build(TINY, 0), validation)
    assert np.isfinite(calib.A) and np.isfinite(calib.B)


def test_identical_scores_calibrate_to_the_positive_rate():
    scores = np.full(1000, 0.7)
    labels = np.zeros(1000)
    labels[:300] = 1.0
    calib = platt_fit_scores(scores, labels)
    assert apply_calibration(scores, calib) == pytest.approx(np.full(1000, 0.3), abs=0.01)


def test_reliability_rows_follow_calibration_curve(rng):
    probs = rng.random(500)
    labels = (rng.random(500) < probs).astype(float)
    accuracy, confidence = calibration_curve(labels, probs, n_bins=N_BINS, strategy="uniform")
    rows = [r for r in reliability_table(probs, labels) if r["count"]]
    assert [r["accuracy"] for r in rows] == pytest.approx(list(accuracy))
    assert [r["confidence"] for r in rows] == pytest.approx(list(confidence))
    weights = np.array([r["count"] for r in rows]) / 500
    assert expected_calibration_error(probs, labels) == pytest.approx(float(np.sum(weights * np.abs(accuracy - confidence))))


def test_bin_edges_close_on_the_right():
    rows = reliability_table(np.array([0.1, 0.1000001]), np.array([1.0, 0.0]))
    assert rows[0]["count"] == 1 and rows[0]["accuracy"] == 1.0
    assert rows[1]["count"] == 1 and rows[1]["accuracy"] == 0.0
