"""
CSV datasets exchanged between CLI commands.

Schemas (header row always present, column order fixed):
  sim_database.csv        bang_time,burnwidth,log10_yield_dt,tion_dt,log10_yield_dd,tion_dd,dsr
  shots.csv               shot_index,campaign,sim_<7 observables>,exp_<7 observables>
  learning_curve.csv      n,campaign,err_<7 observables>
  actual_vs_predicted.csv shot_index,split,observable,measured,simulation,prediction

Floats are written with repr(), which round-trips exactly. Every file is
written to a temporary sibling and renamed into place.
"""

import csv
import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from calibration import (
    N_OBSERVABLES, OBSERVABLE_KEYS, CalibrationError, LearningCurve, ObservableVector, ShotRecord,
)
from evaluation import SCATTER_COLUMNS

logger = logging.getLogger(__name__)

SIM_COLUMNS = list(OBSERVABLE_KEYS)
SHOT_COLUMNS = (["shot_index", "campaign"]
                + [f"sim_{k}" for k in OBSERVABLE_KEYS]
                + [f"exp_{k}" for k in OBSERVABLE_KEYS])
CURVE_COLUMNS = ["n", "campaign"] + [f"err_{k}" for k in OBSERVABLE_KEYS]

PathLike = Union[str, Path]


class DatasetError(ValueError):
    """Malformed dataset file; carries the path and 1-based line number."""

    def __init__(self, path: PathLike, line: int, message: str):
        self.path = Path(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


# =============================================================================
# Atomic writes
# =============================================================================

def atomic_write_text(path: PathLike, text: str):
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(header)
    count = 0
    for row in rows:
        writer.writerow([_format(v) for v in row])
        count += 1
    atomic_write_text(path, buf.getvalue())
    logger.info(f"Wrote {count} rows to {path}")


def _read_csv(path: PathLike, header: Sequence[str]) -> List[List[str]]:
    """Rows after a header check; each row has exactly len(header) fields."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset {path} does not exist")
    with open(path, 'r', newline='') as f:
        reader = csv.reader(f)
        try:
            found = next(reader)
        except StopIteration:
            raise DatasetError(path, 1, "file is empty, expected a header row") from None
        if found != list(header):
            raise DatasetError(path, 1, f"unexpected header {found}, expected {list(header)}")
        rows = []
        for row in reader:
            if len(row) != len(header):
                raise DatasetError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            rows.append(row)
    return rows


def _parse_floats(path: PathLike, line: int, fields: Sequence[str]) -> np.ndarray:
    try:
        values = np.array([float(x) for x in fields], dtype=np.float64)
    except ValueError as e:
        raise DatasetError(path, line, f"not a number: {e}") from None
    if not np.all(np.isfinite(values)):
        raise DatasetError(path, line, "non-finite value")
    return values


# =============================================================================
# Simulation database
# =============================================================================

def write_sim_database(path: PathLike, data: np.ndarray):
    _write_csv(path, SIM_COLUMNS, data.tolist())


def read_sim_database(path: PathLike) -> np.ndarray:
    rows = _read_csv(path, SIM_COLUMNS)
    if not rows:
        raise DatasetError(path, 2, "no data rows")
    # data rows start on line 2
    return np.vstack([_parse_floats(path, i + 2, row) for i, row in enumerate(rows)])


# =============================================================================
# Shots
# =============================================================================

def write_shots(path: PathLike, shots: Sequence[ShotRecord]):
    rows = ([s.shot_index, s.campaign_label] + s.sim.to_array().tolist() + s.exp.to_array().tolist()
            for s in shots)
    _write_csv(path, SHOT_COLUMNS, rows)


def read_shots(path: PathLike) -> List[ShotRecord]:
    shots = []
    seen: Dict[int, int] = {}
    for i, row in enumerate(_read_csv(path, SHOT_COLUMNS)):
        line = i + 2
        try:
            shot_index = int(row[0])
        except ValueError:
            raise DatasetError(path, line, f"shot_index {row[0]!r} is not an integer") from None
        values = _parse_floats(path, line, row[2:])
        try:
            sim = ObservableVector.from_array(values[:N_OBSERVABLES]).validate()
            exp = ObservableVector.from_array(values[N_OBSERVABLES:]).validate()
        except CalibrationError as e:
            raise DatasetError(path, line, str(e)) from None
        if shot_index in seen:
            raise DatasetError(path, line, f"Duplicate shot_index {shot_index} (first on line {seen[shot_index]})")
        seen[shot_index] = line
        shots.append(ShotRecord(shot_index, sim, exp, row[1]))
    if not shots:
        raise DatasetError(path, 2, "no data rows")
    return shots


# =============================================================================
# Results
# =============================================================================

def write_learning_curve(path: PathLike, curve: LearningCurve):
    rows = ([n, campaign] + errors.tolist()
            for n, campaign, errors in zip(curve.ns, curve.campaigns, curve.errors))
    _write_csv(path, CURVE_COLUMNS, rows)


def read_learning_curve(path: PathLike) -> Dict[int, np.ndarray]:
    """n -> error row."""
    out = {}
    for i, row in enumerate(_read_csv(path, CURVE_COLUMNS)):
        out[int(row[0])] = _parse_floats(path, i + 2, row[2:])
    return out


def write_actual_vs_predicted(path: PathLike, rows: Sequence[Dict]):
    _write_csv(path, SCATTER_COLUMNS, ([r[c] for c in SCATTER_COLUMNS] for r in rows))
