"""Platt scaling on held-out scores and expected calibration error."""

import logging
from typing import List, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from sklearn.calibration import calibration_curve

from dataset import Dataset
from errors import CalibrationError
from models.schemas import Calibration
from nn.network import ParamStore
from predictor import dataset_scores

logger = logging.getLogger(__name__)

N_BINS = 10


def _smoothed_targets(labels: np.ndarray) -> np.ndarray:
    n_pos = float(np.sum(labels >= 0.5))
    n_neg = float(len(labels) - n_pos)
    return np.where(labels >= 0.5, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))


def platt_fit_scores(scores: np.ndarray, labels: np.ndarray) -> Calibration:
    """Fit p = 1 / (1 + exp(A*s + B)) by minimizing cross-entropy on smoothed targets."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if len(scores) == 0:
        raise CalibrationError("validation split is empty")
    if np.all(labels >= 0.5) or np.all(labels < 0.5):
        raise CalibrationError("validation labels contain a single class")
    t = _smoothed_targets(labels)

    def objective(theta):
        f = theta[0] * scores + theta[1]
        # -[t log p + (1 - t) log(1 - p)] with p = sigmoid(-f)
        loss = np.sum(np.logaddexp(0.0, f) - (1.0 - t) * f)
        resid = t - expit(-f)
        return loss, np.array([np.sum(resid * scores), np.sum(resid)])

    n_pos = float(np.sum(labels >= 0.5))
    x0 = np.array([0.0, np.log((len(labels) - n_pos + 1.0) / (n_pos + 1.0))])
    result = minimize(objective, x0, jac=True, method="BFGS")
    if not np.all(np.isfinite(result.x)):
        raise CalibrationError(f"Platt fit diverged: {result.message}")
    logger.info(f"Platt fit A={result.x[0]:.4f} B={result.x[1]:.4f} ({result.nit} iterations)")
    return Calibration(A=float(result.x[0]), B=float(result.x[1]))


def platt_fit(params: ParamStore, validation: Dataset) -> Calibration:
    scores, labels = dataset_scores(params, validation)
    return platt_fit_scores(scores, labels)


def _bin_counts(probs: np.ndarray, n_bins: int) -> np.ndarray:
    # same right-closed assignment calibration_curve uses for strategy="uniform"
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    return np.bincount(np.searchsorted(edges[1:-1], probs), minlength=n_bins)


def _reliability(probs, labels, n_bins: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-bin counts plus accuracy and confidence for the non-empty bins."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if len(probs) == 0:
        return np.zeros(n_bins, dtype=int), np.array([]), np.array([])
    accuracy, confidence = calibration_curve(labels, probs, n_bins=n_bins, strategy="uniform")
    return _bin_counts(probs, n_bins), accuracy, confidence


def expected_calibration_error(probs, labels, n_bins: int = N_BINS) -> float:
    """Sum over equal-width bins of |accuracy - confidence| weighted by bin mass."""
    counts, accuracy, confidence = _reliability(probs, labels, n_bins)
    if counts.sum() == 0:
        return 0.0
    weights = counts[counts > 0] / counts.sum()
    return float(np.sum(weights * np.abs(accuracy - confidence)))


def reliability_table(probs, labels, n_bins: int = N_BINS) -> List[dict]:
    """Per-bin rows for reliability diagrams: empty bins carry count 0 and no rates."""
    counts, accuracy, confidence = _reliability(probs, labels, n_bins)
    filled = iter(zip(accuracy, confidence))
    rows = []
    for b, count in enumerate(counts):
        acc, conf = next(filled) if count else (None, None)
        rows.append(
            {
                "bin_low": b / n_bins,
                "bin_high": (b + 1) / n_bins,
                "count": int(count),
                "confidence": None if conf is None else float(conf),
                "accuracy": None if acc is None else float(acc),
            }
        )
    return rows
