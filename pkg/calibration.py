"""
Simulation-to-experiment calibration by transfer-learning an autoencoder.

Workflow:
1. Fit a Normalizer on the simulation database.
2. Train the 7-10-10-5-10-10-7 autoencoder to reconstruct simulation observables.
3. Clone it, freeze everything except the final decoder layers, and retrain
   those on (simulated -> measured) pairs from the shot database.
4. Track holdout error as shots are ingested in chronological order.
"""

import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from numcore import SeededRng, NonFiniteError
from network import (
    Activation, FreezeMask, LossHistory, Mlp, TrainConfig,
    forward, forward_batch, init_network, train,
)

logger = logging.getLogger(__name__)

# Canonical observable order. Short keys are used in CSV headers.
OBSERVABLE_KEYS = (
    "bang_time",
    "burnwidth",
    "log10_yield_dt",
    "tion_dt",
    "log10_yield_dd",
    "tion_dd",
    "dsr",
)
N_OBSERVABLES = len(OBSERVABLE_KEYS)

# Layers retrained during transfer (the last two of the decoder).
DEFAULT_RETRAIN_LAYERS = 2


class CalibrationError(ValueError):
    """Raised for invalid calibration inputs (empty shot lists, overlaps, bad statistics)."""


# =============================================================================
# Observables and shots
# =============================================================================

@dataclass(frozen=True)
class ObservableVector:
    """The seven implosion diagnostics; yields are carried as log10."""
    gamma_bang_time: float      # ns
    gamma_burnwidth: float      # ns
    log10_yield_dt: float
    tion_dt: float              # keV
    log10_yield_dd: float
    tion_dd: float              # keV
    dsr: float                  # fraction

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise NonFiniteError(f"Observable {f.name} is not finite: {getattr(self, f.name)}")

    def validate(self) -> "ObservableVector":
        """Physical range checks applied to ingested or generated data."""
        if not 0.0 <= self.dsr <= 1.0:
            raise CalibrationError(f"dsr must lie in [0, 1], got {self.dsr}")
        if not self.gamma_burnwidth > 0.0:
            raise CalibrationError(f"Burnwidth must be positive, got {self.gamma_burnwidth}")
        return self

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "ObservableVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (N_OBSERVABLES,):
            raise CalibrationError(f"Expected {N_OBSERVABLES} observables, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    @classmethod
    def from_raw_yields(cls, bang_time: float, burnwidth: float, yield_dt: float, tion_dt: float,
                        yield_dd: float, tion_dd: float, dsr: float) -> "ObservableVector":
        """Build from linear neutron yields; log10 is applied here."""
        if yield_dt <= 0 or yield_dd <= 0:
            raise CalibrationError(f"Neutron yields must be positive, got DT={yield_dt}, DD={yield_dd}")
        return cls(bang_time, burnwidth, math.log10(yield_dt), tion_dt,
                   math.log10(yield_dd), tion_dd, dsr)

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(OBSERVABLE_KEYS, self.to_array().tolist()))


ObservableData = Union[np.ndarray, Sequence[ObservableVector]]


def stack_observables(data: ObservableData) -> np.ndarray:
    """(n, 7) float64 array from ObservableVectors or an existing array."""
    if isinstance(data, np.ndarray):
        arr = data.astype(np.float64, copy=False)
    else:
        arr = np.array([v.to_array() for v in data], dtype=np.float64).reshape(-1, N_OBSERVABLES)
    if arr.ndim != 2 or arr.shape[1] != N_OBSERVABLES:
        raise CalibrationError(f"Observable data must have shape (n, {N_OBSERVABLES}), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class ShotRecord:
    shot_index: int
    sim: ObservableVector
    exp: ObservableVector
    campaign_label: str = ""


def sim_matrix(shots: Sequence[ShotRecord]) -> np.ndarray:
    return stack_observables([s.sim for s in shots])


def exp_matrix(shots: Sequence[ShotRecord]) -> np.ndarray:
    return stack_observables([s.exp for s in shots])


def check_unique_indices(shots: Sequence[ShotRecord]):
    seen = set()
    for shot in shots:
        if shot.shot_index in seen:
            raise CalibrationError(f"Duplicate shot_index {shot.shot_index}")
        seen.add(shot.shot_index)


def split_holdout(shots: Sequence[ShotRecord], holdout_size: int = 7) -> Tuple[List[ShotRecord], List[ShotRecord]]:
    """
    Chronological split: the holdout is the `holdout_size` most recent shots.
    Returns (training shots ascending, holdout shots ascending).
    """
    if holdout_size < 1:
        raise CalibrationError(f"Holdout size must be >= 1, got {holdout_size}")
    if len(shots) <= holdout_size:
        raise CalibrationError(f"Need more than {holdout_size} shots for a holdout split, got {len(shots)}")
    check_unique_indices(shots)
    ordered = sorted(shots, key=lambda s: s.shot_index)
    return ordered[:-holdout_size], ordered[-holdout_size:]


# =============================================================================
# Normalization
# =============================================================================

@dataclass
class Normalizer:
    """Per-observable standardization with simulation-set statistics."""
    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.sd = np.asarray(self.sd, dtype=np.float64)
        if self.mean.shape != (N_OBSERVABLES,) or self.sd.shape != (N_OBSERVABLES,):
            raise CalibrationError(f"Normalizer statistics must have {N_OBSERVABLES} entries")
        if not np.all(self.sd > 0):
            raise CalibrationError(f"Normalizer standard deviations must be positive, got {self.sd.tolist()}")

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.sd

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.sd + self.mean


def fit_normalizer(sim_data: ObservableData) -> Normalizer:
    """Population mean and standard deviation of every observable."""
    arr = stack_observables(sim_data)
    if arr.shape[0] < 2:
        raise CalibrationError(f"Need at least 2 simulation samples, got {arr.shape[0]}")
    mean = arr.mean(axis=0)
    sd = arr.std(axis=0)
    for key, s in zip(OBSERVABLE_KEYS, sd):
        if not s > 0:
            raise CalibrationError(f"Observable {key} has zero variance in the simulation set")
    return Normalizer(mean, sd)


# =============================================================================
# Autoencoder
# =============================================================================

@dataclass(frozen=True)
class AutoencoderSpec:
    input_dim: int = N_OBSERVABLES
    encoder_widths: Tuple[int, ...] = (10, 10)
    latent_dim: int = 5
    hidden_activation: Activation = Activation.RELU
    output_activation: Activation = Activation.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "hidden_activation", Activation(self.hidden_activation))
        object.__setattr__(self, "output_activation", Activation(self.output_activation))
        if any(w < 1 for w in self.widths):
            raise CalibrationError(f"Autoencoder widths must all be >= 1, got {self.widths}")

    @property
    def widths(self) -> List[int]:
        enc = [self.input_dim, *self.encoder_widths, self.latent_dim]
        return enc + list(reversed(enc[:-1]))

    @property
    def activations(self) -> List[Activation]:
        n_layers = len(self.widths) - 1
        return [self.hidden_activation] * (n_layers - 1) + [self.output_activation]

    @property
    def latent_layer(self) -> int:
        """Index of the layer whose output is the latent code."""
        return len(self.encoder_widths)

    def to_dict(self) -> Dict:
        return {
            "input_dim": self.input_dim,
            "encoder_widths": list(self.encoder_widths),
            "latent_dim": self.latent_dim,
            "hidden_activation": self.hidden_activation.value,
            "output_activation": self.output_activation.value,
        }


def build_autoencoder(spec: AutoencoderSpec, rng: SeededRng) -> Mlp:
    net = init_network(spec.widths, spec.activations, rng)
    logger.info(f"Built autoencoder {'-'.join(map(str, spec.widths))} with {net.parameter_count()} parameters")
    return net


def train_base(ae: Mlp, sim_data: ObservableData, normalizer: Normalizer,
               cfg: TrainConfig) -> Tuple[Mlp, LossHistory]:
    """Reconstruction training on normalized simulation observables, all layers trainable."""
    X = normalizer.transform(stack_observables(sim_data))
    logger.info(f"Training base autoencoder on {X.shape[0]} simulations "
                f"(lr={cfg.learning_rate}, epochs={cfg.epochs}, batch={cfg.batch_size})")
    return train(ae, X, X, FreezeMask.all_trainable(len(ae)), cfg)


def _checked_input(v: ObservableVector) -> np.ndarray:
    arr = v.to_array()
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("Observable input contains non-finite values")
    return arr


def reconstruct(model: Mlp, normalizer: Normalizer, v: ObservableVector) -> ObservableVector:
    out = forward(model, normalizer.transform(_checked_input(v)))
    return ObservableVector.from_array(normalizer.inverse(out))


def reconstruct_batch(model: Mlp, normalizer: Normalizer, data: ObservableData) -> np.ndarray:
    return normalizer.inverse(forward_batch(model, normalizer.transform(stack_observables(data))))


# =============================================================================
# Transfer learning
# =============================================================================

@dataclass
class CalibratedModel:
    base: Mlp
    calibrated: Mlp
    normalizer: Normalizer
    n_experiments_used: int
    spec: AutoencoderSpec = field(default_factory=AutoencoderSpec)
    base_config: Optional[TrainConfig] = None
    transfer_config: Optional[TrainConfig] = None
    retrain_layers: int = DEFAULT_RETRAIN_LAYERS

    def __post_init__(self):
        if self.base.widths != self.calibrated.widths:
            raise CalibrationError(f"Base {self.base.widths} and calibrated {self.calibrated.widths} differ")

    @classmethod
    def uncalibrated(cls, base: Mlp, normalizer: Normalizer, spec: AutoencoderSpec,
                     base_config: Optional[TrainConfig] = None) -> "CalibratedModel":
        """A base-only model: the calibrated net is a copy of the base."""
        return cls(base, base.copy(), normalizer, 0, spec, base_config, None)


def transfer_mask(n_layers: int, retrain_layers: int = DEFAULT_RETRAIN_LAYERS) -> FreezeMask:
    return FreezeMask.train_last(n_layers, retrain_layers)


def transfer_learn(base: Mlp, shots: Sequence[ShotRecord], normalizer: Normalizer, cfg: TrainConfig,
                   retrain_layers: int = DEFAULT_RETRAIN_LAYERS,
                   spec: Optional[AutoencoderSpec] = None,
                   base_config: Optional[TrainConfig] = None) -> CalibratedModel:
    """
    Retarget the decoder tail from simulated to measured observables.

    Inputs are normalized simulation predictions, targets normalized
    measurements; only the last `retrain_layers` layers move.
    """
    if not shots:
        raise CalibrationError("transfer_learn needs at least one shot")
    X = normalizer.transform(sim_matrix(shots))
    Y = normalizer.transform(exp_matrix(shots))
    mask = transfer_mask(len(base), retrain_layers)
    logger.debug(f"Transfer learning on {len(shots)} shots, trainable layers {mask.trainable}")
    calibrated, _ = train(base, X, Y, mask, cfg)
    return CalibratedModel(base, calibrated, normalizer, len(shots), spec or AutoencoderSpec(),
                           base_config, cfg, retrain_layers)


def predict_experiment(model: CalibratedModel, sim: ObservableVector) -> ObservableVector:
    """Data-informed prediction of the measured observables for one simulation output."""
    out = forward(model.calibrated, model.normalizer.transform(_checked_input(sim)))
    return ObservableVector.from_array(model.normalizer.inverse(out))


def predict_experiment_batch(model: CalibratedModel, sims: ObservableData) -> np.ndarray:
    """Row-wise predict_experiment for an (n, 7) array; same arithmetic per row."""
    arr = stack_observables(sims)
    return np.array([predict_experiment(model, ObservableVector.from_array(row)).to_array() for row in arr]
                    ).reshape(-1, N_OBSERVABLES)


# =============================================================================
# Learning curve
# =============================================================================

@dataclass
class LearningCurve:
    """
    Holdout mean relative error per observable vs. number of ingested shots.

    errors[k] belongs to ns[k]; campaigns[k] is the label of the ns[k]-th
    ingested shot ("" for the n=0 baseline row).
    """
    ns: List[int]
    campaigns: List[str]
    errors: np.ndarray
    simulation_error: np.ndarray

    def row(self, n: int) -> np.ndarray:
        return self.errors[self.ns.index(n)]

    def __len__(self):
        return len(self.ns)


def _holdout_errors(model: CalibratedModel, holdout: Sequence[ShotRecord]) -> np.ndarray:
    # evaluation imports this module
    from evaluation import evaluate_holdout
    return evaluate_holdout(model, holdout).relative_error


def _curve_step(base: Mlp, shots: Sequence[ShotRecord], holdout: Sequence[ShotRecord],
                normalizer: Normalizer, cfg: TrainConfig, retrain_layers: int) -> np.ndarray:
    model = transfer_learn(base, shots, normalizer, cfg, retrain_layers)
    return _holdout_errors(model, holdout)


def learning_curve(base: Mlp, shots_chronological: Sequence[ShotRecord], holdout: Sequence[ShotRecord],
                   normalizer: Normalizer, cfg: TrainConfig,
                   retrain_layers: int = DEFAULT_RETRAIN_LAYERS,
                   include_baseline: bool = False, workers: int = 1) -> LearningCurve:
    """
    For n = 1..N transfer-learn the same base on the first n shots and score the holdout.

    Every step starts from `base` with a fresh optimizer, so step n depends
    only on (base, first n shots, holdout, cfg). With workers > 1 the steps
    run in a process pool; rows are assembled by n.
    """
    shots = list(shots_chronological)
    if not shots:
        raise CalibrationError("learning_curve needs at least one training shot")
    if not holdout:
        raise CalibrationError("learning_curve needs a non-empty holdout")
    indices = [s.shot_index for s in shots]
    if any(a >= b for a, b in zip(indices, indices[1:])):
        raise CalibrationError("Training shots must be sorted by strictly increasing shot_index")
    overlap = set(indices) & {s.shot_index for s in holdout}
    if overlap:
        raise CalibrationError(f"Holdout overlaps training shots: {sorted(overlap)}")

    ns = list(range(1, len(shots) + 1))
    logger.info(f"Learning curve over {len(ns)} steps, holdout of {len(holdout)} shots, workers={workers}")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {n: pool.submit(_curve_step, base, shots[:n], holdout, normalizer, cfg, retrain_layers)
                       for n in ns}
            rows = [futures[n].result() for n in ns]
    else:
        rows = []
        for n in ns:
            rows.append(_curve_step(base, shots[:n], holdout, normalizer, cfg, retrain_layers))
            logger.info(f"Step n={n}: mean holdout error {rows[-1].mean():.4f}")

    campaigns = [shots[n - 1].campaign_label for n in ns]
    if include_baseline:
        untouched = CalibratedModel(base, base.copy(), normalizer, 0)
        rows.insert(0, _holdout_errors(untouched, holdout))
        ns.insert(0, 0)
        campaigns.insert(0, "")

    from evaluation import relative_errors_per_observable
    sim_error = relative_errors_per_observable(exp_matrix(holdout), sim_matrix(holdout))
    return LearningCurve(ns, campaigns, np.vstack(rows), sim_error)
