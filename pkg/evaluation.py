"""
Prediction metrics for the calibration workflow.

- explained variance: reconstruction quality of the base autoencoder
- mean relative error: accuracy of calibrated (and raw simulation) predictions
- row exports for actual-vs-predicted scatter plots and campaign summaries

Yield errors are computed on the log10 values carried by ObservableVector.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.metrics import explained_variance_score, mean_absolute_percentage_error

from network import Mlp
from calibration import (
    OBSERVABLE_KEYS, CalibratedModel, Normalizer, ObservableData, ShotRecord,
    exp_matrix, predict_experiment_batch, reconstruct_batch, sim_matrix, stack_observables,
)

logger = logging.getLogger(__name__)


class MetricError(ValueError):
    """Raised when a metric is undefined for its inputs."""


# =============================================================================
# Scalar metrics
# =============================================================================

def _as_series(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise MetricError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def explained_variance(truth: Sequence[float], pred: Sequence[float]) -> float:
    """1 - Var(truth - pred) / Var(truth), population variances."""
    t = _as_series(truth, "truth")
    p = _as_series(pred, "pred")
    if t.shape != p.shape:
        raise MetricError(f"Length mismatch: truth {t.shape[0]} vs pred {p.shape[0]}")
    if t.shape[0] < 2:
        raise MetricError(f"Explained variance needs at least 2 samples, got {t.shape[0]}")
    if not np.var(t) > 0:
        raise MetricError("Explained variance is undefined for constant truth")
    return float(explained_variance_score(t, p))


def mean_relative_error(truth: Sequence[float], pred: Sequence[float]) -> float:
    """(1/n) * sum |pred_i - truth_i| / |truth_i|, as a fraction."""
    t = _as_series(truth, "truth")
    p = _as_series(pred, "pred")
    if t.shape != p.shape:
        raise MetricError(f"Length mismatch: truth {t.shape[0]} vs pred {p.shape[0]}")
    if t.shape[0] < 1:
        raise MetricError("Mean relative error needs at least one sample")
    zeros = np.flatnonzero(t == 0.0)
    if zeros.size:
        raise MetricError(f"Relative error undefined: truth is zero at index {int(zeros[0])}")
    return float(mean_absolute_percentage_error(t, p))


def relative_errors_per_observable(truth: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """mean_relative_error for each of the 7 observable columns."""
    return np.array([mean_relative_error(truth[:, j], pred[:, j]) for j in range(truth.shape[1])])


def explained_variance_per_observable(truth: np.ndarray, pred: np.ndarray) -> np.ndarray:
    return np.array([explained_variance(truth[:, j], pred[:, j]) for j in range(truth.shape[1])])


# =============================================================================
# Reports
# =============================================================================

@dataclass
class MetricReport:
    """Per-observable metrics over `n_samples` records."""
    n_samples: int
    explained_variance: Optional[np.ndarray] = None
    relative_error: Optional[np.ndarray] = None
    baseline_error: Optional[np.ndarray] = None      # raw simulation vs measurement
    shot_indices: List[int] = field(default_factory=list)

    def __post_init__(self):
        if self.n_samples < 1:
            raise MetricError(f"A report needs at least one sample, got {self.n_samples}")

    def to_dict(self) -> Dict:
        out = {"n_samples": self.n_samples}
        for name in ("explained_variance", "relative_error", "baseline_error"):
            values = getattr(self, name)
            if values is not None:
                out[name] = dict(zip(OBSERVABLE_KEYS, values.tolist()))
        if self.shot_indices:
            out["shot_indices"] = list(self.shot_indices)
        return out


def reconstruction_report(model: Mlp, normalizer: Normalizer, data: ObservableData) -> MetricReport:
    """Explained variance of autoencoder reconstructions, per observable."""
    truth = stack_observables(data)
    pred = reconstruct_batch(model, normalizer, truth)
    ev = explained_variance_per_observable(truth, pred)
    logger.info("Reconstruction explained variance: "
                + ", ".join(f"{k}={v:.4f}" for k, v in zip(OBSERVABLE_KEYS, ev)))
    return MetricReport(truth.shape[0], explained_variance=ev)


def _shot_report(model: CalibratedModel, shots: Sequence[ShotRecord]) -> MetricReport:
    if not shots:
        raise MetricError("Cannot evaluate an empty set of shots")
    measured = exp_matrix(shots)
    simulated = sim_matrix(shots)
    predicted = predict_experiment_batch(model, simulated)
    return MetricReport(
        len(shots),
        relative_error=relative_errors_per_observable(measured, predicted),
        baseline_error=relative_errors_per_observable(measured, simulated),
        shot_indices=[s.shot_index for s in shots],
    )


def evaluate_holdout(model: CalibratedModel, holdout: Sequence[ShotRecord]) -> MetricReport:
    """Calibrated and raw-simulation mean relative error over the holdout shots."""
    return _shot_report(model, holdout)


def evaluate_training_fit(model: CalibratedModel, train_shots: Sequence[ShotRecord]) -> MetricReport:
    """Same metrics over the shots the model was retrained on."""
    return _shot_report(model, train_shots)


def summarize_by_campaign(model: CalibratedModel, shots: Sequence[ShotRecord]) -> Dict[str, MetricReport]:
    """Per-campaign reports, keyed by label, in order of first appearance."""
    groups: Dict[str, List[ShotRecord]] = {}
    for shot in shots:
        groups.setdefault(shot.campaign_label, []).append(shot)
    return {label: _shot_report(model, members) for label, members in groups.items()}


# =============================================================================
# Exports
# =============================================================================

SCATTER_COLUMNS = ("shot_index", "split", "observable", "measured", "simulation", "prediction")


def export_actual_vs_predicted(model: CalibratedModel, train: Sequence[ShotRecord],
                               holdout: Sequence[ShotRecord]) -> List[Dict]:
    """One row per shot and observable: measured, simulated and calibrated values."""
    rows = []
    for split, shots in (("train", train), ("holdout", holdout)):
        if not shots:
            continue
        predicted = predict_experiment_batch(model, sim_matrix(shots))
        for shot, pred in zip(shots, predicted):
            measured = shot.exp.to_array()
            simulated = shot.sim.to_array()
            for j, key in enumerate(OBSERVABLE_KEYS):
                rows.append({
                    "shot_index": shot.shot_index,
                    "split": split,
                    "observable": key,
                    "measured": float(measured[j]),
                    "simulation": float(simulated[j]),
                    "prediction": float(pred[j]),
                })
    return rows
