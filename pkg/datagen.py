"""
Synthetic stand-in for a capsule simulation database and an experiment series.

`simulate` is a fixed polynomial map from four design knobs in [0,1] to
the seven observables. `experiment_truth` applies a smooth systematic
warp to it and adds Gaussian measurement noise, so calibration has a
known discrepancy to learn.
"""

import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np

from numcore import SeededRng
from calibration import N_OBSERVABLES, ObservableVector, ShotRecord

logger = logging.getLogger(__name__)

# bang time, burnwidth, log DT yield, DT Tion, log DD yield, DD Tion, DSR (~1% of scale)
DEFAULT_NOISE_SD = (0.05, 0.003, 0.02, 0.03, 0.02, 0.03, 0.0005)

# Campaign labels by x1 (drive) quartile, lowest first.
CAMPAIGNS = ("HighFoot", "Bigfoot", "HDC", "Hybrid E")


class DesignRangeError(ValueError):
    """Raised when a design knob falls outside [0, 1]."""


@dataclass(frozen=True)
class DesignPoint:
    """Abstract knobs: drive strength, adiabat, asymmetry seed, capsule scale."""
    x1: float
    x2: float
    x3: float
    x4: float

    def __post_init__(self):
        for name, value in zip(("x1", "x2", "x3", "x4"), self.as_array()):
            if not 0.0 <= value <= 1.0:
                raise DesignRangeError(f"Design knob {name}={value} outside [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3, self.x4], dtype=np.float64)


@dataclass(frozen=True)
class WarpCoefficients:
    """Systematic simulation -> experiment discrepancy."""
    yield_offset: float = 0.5       # log10 yields drop by offset + slope * x3
    yield_asymmetry_slope: float = 1.5
    tion_scale: float = 0.85        # Tion -> scale * Tion + offset
    tion_offset: float = 0.3
    bang_time_shift: float = 0.1    # ns
    burnwidth_scale: float = 1.3
    dsr_scale: float = 0.9


@dataclass(frozen=True)
class GeneratorConfig:
    noise_sd: Tuple[float, ...] = DEFAULT_NOISE_SD
    warp: WarpCoefficients = field(default_factory=WarpCoefficients)
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "noise_sd", tuple(float(s) for s in self.noise_sd))
        if len(self.noise_sd) != N_OBSERVABLES:
            raise ValueError(f"noise_sd needs {N_OBSERVABLES} entries, got {len(self.noise_sd)}")
        if any(s < 0 for s in self.noise_sd):
            raise ValueError(f"noise_sd entries must be >= 0, got {self.noise_sd}")

    @classmethod
    def from_dict(cls, data: Dict) -> "GeneratorConfig":
        warp = WarpCoefficients(**(data.get("warp") or {}))
        return cls(tuple(data.get("noise_sd", DEFAULT_NOISE_SD)), warp, data.get("seed"))

    def rng(self) -> SeededRng:
        if self.seed is None:
            raise ValueError("GeneratorConfig has no seed")
        return SeededRng(self.seed)

    def to_dict(self) -> Dict:
        return {"noise_sd": list(self.noise_sd), "warp": asdict(self.warp), "seed": self.seed}


# =============================================================================
# Maps
# =============================================================================

def _check_design_array(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 4:
        raise DesignRangeError(f"Design array must have shape (n, 4), got {X.shape}")
    if np.any(X < 0.0) or np.any(X > 1.0) or not np.all(np.isfinite(X)):
        raise DesignRangeError("Design knobs must lie in [0, 1]")
    return X


def simulate_batch(X: np.ndarray) -> np.ndarray:
    """Row-wise simulate over an (n, 4) design array; returns (n, 7)."""
    X = _check_design_array(X)
    v = 0.2 + 0.8 * X[:, 0]
    a = 1.0 + 3.0 * X[:, 1]
    s = X[:, 2]
    c = 0.5 + 0.5 * X[:, 3]

    out = np.empty((X.shape[0], N_OBSERVABLES), dtype=np.float64)
    out[:, 0] = 8.0 - 2.0 * v + 0.5 * a
    out[:, 1] = 0.15 + 0.10 * a - 0.05 * v
    out[:, 2] = 15.0 + 2.5 * v - 0.8 * a - 1.5 * s ** 2 + 1.2 * c
    out[:, 3] = 2.0 + 3.0 * v - 0.5 * a * s
    out[:, 4] = out[:, 2] - 2.2 + 0.1 * a
    out[:, 5] = 0.9 * out[:, 3] - 0.1
    out[:, 6] = 0.02 + 0.04 * c - 0.01 * a
    return out


def simulate(d: DesignPoint) -> ObservableVector:
    return ObservableVector.from_array(simulate_batch(d.as_array()[None, :])[0])


def warp_batch(X: np.ndarray, sim: np.ndarray, warp: WarpCoefficients) -> np.ndarray:
    """Noise-free experiment values for simulated rows `sim` at designs `X`."""
    out = sim.copy()
    drop = warp.yield_offset + warp.yield_asymmetry_slope * X[:, 2]
    out[:, 0] += warp.bang_time_shift
    out[:, 1] *= warp.burnwidth_scale
    out[:, 2] -= drop
    out[:, 3] = warp.tion_scale * out[:, 3] + warp.tion_offset
    out[:, 4] -= drop
    out[:, 5] = warp.tion_scale * out[:, 5] + warp.tion_offset
    out[:, 6] *= warp.dsr_scale
    return out


def _noise(cfg: GeneratorConfig, rng: SeededRng) -> np.ndarray:
    """One draw per observable, in canonical order."""
    return np.array([rng.normal(0.0, sd, 1)[0] for sd in cfg.noise_sd])


def experiment_truth(d: DesignPoint, cfg: GeneratorConfig, rng: SeededRng) -> ObservableVector:
    X = d.as_array()[None, :]
    clean = warp_batch(X, simulate_batch(X), cfg.warp)[0]
    return ObservableVector.from_array(clean + _noise(cfg, rng))


# =============================================================================
# Generators
# =============================================================================

def generate_sim_design(n: int, rng: SeededRng) -> np.ndarray:
    if n < 1:
        raise ValueError(f"Database size must be >= 1, got {n}")
    return rng.uniform(0.0, 1.0, 4 * n).reshape(n, 4)


def generate_sim_database(n: int, rng: SeededRng) -> List[ObservableVector]:
    """n uniform designs on the unit cube mapped through simulate."""
    return [ObservableVector.from_array(row) for row in generate_sim_array(n, rng)]


def generate_sim_array(n: int, rng: SeededRng) -> np.ndarray:
    """generate_sim_database as an (n, 7) array."""
    data = simulate_batch(generate_sim_design(n, rng))
    logger.info(f"Generated {n} simulated designs")
    return data


def campaign_for(x1: float) -> str:
    return CAMPAIGNS[min(int(x1 * 4), 3)]


def generate_shot_series(n: int, cfg: GeneratorConfig, rng: SeededRng) -> List[ShotRecord]:
    """
    n chronological shots whose drive knob drifts upward with shot index.

    Per shot the stream yields four uniforms (x1 base, x2, x3, x4) and then
    seven noise draws. x1 = 0.5 * u + 0.5 * i / (n - 1).
    """
    if n < 1:
        raise ValueError(f"Shot count must be >= 1, got {n}")
    shots = []
    for i in range(n):
        u = rng.uniform(0.0, 1.0, 4)
        drift = i / (n - 1) if n > 1 else 0.0
        d = DesignPoint(0.5 * u[0] + 0.5 * drift, u[1], u[2], u[3])
        sim = simulate(d).validate()
        exp = experiment_truth(d, cfg, rng).validate()
        shots.append(ShotRecord(i, sim, exp, campaign_for(d.x1)))
    logger.info(f"Generated {n} shots across campaigns {sorted({s.campaign_label for s in shots})}")
    return shots
