#!/usr/bin/env python3
"""
Full system acceptance run.

Trains the base autoencoder on a 20,000-row synthetic simulation database
with the production hyperparameters, transfer-learns on a 47-shot series
(40 train, 7 holdout) and checks reconstruction quality, calibration gains
and learning-curve convergence. Takes several minutes; marked slow.
"""

import logging

import numpy as np
import pytest

from numcore import SeededRng
from network import base_train_config, transfer_train_config
from calibration import (
    AutoencoderSpec, build_autoencoder, fit_normalizer, learning_curve, split_holdout, train_base,
    transfer_learn,
)
from datagen import GeneratorConfig, generate_shot_series, generate_sim_array
from evaluation import evaluate_holdout, reconstruction_report

logger = logging.getLogger("system_test")

pytestmark = pytest.mark.slow

SEED = 20210301


@pytest.fixture(scope="module")
def base_run():
    rng = SeededRng(SEED)
    train_data = generate_sim_array(20000, rng.derive(0))
    test_data = generate_sim_array(2000, rng.derive(3))
    normalizer = fit_normalizer(train_data)
    ae = build_autoencoder(AutoencoderSpec(), rng.derive(2))
    base, history = train_base(ae, train_data, normalizer, base_train_config(seed=SEED))
    logger.info(f"Base training final loss {history.final:.3e}")
    return base, normalizer, test_data


@pytest.fixture(scope="module")
def shot_split():
    shots = generate_shot_series(47, GeneratorConfig(seed=SEED), SeededRng(SEED, 1))
    return split_holdout(shots, 7)


def test_reconstruction_explained_variance(base_run):
    base, normalizer, test_data = base_run
    report = reconstruction_report(base, normalizer, test_data)
    assert np.all(report.explained_variance > 0.9), report.to_dict()


def test_calibration_beats_simulation(base_run, shot_split):
    base, normalizer, _ = base_run
    train, holdout = shot_split
    model = transfer_learn(base, train, normalizer, transfer_train_config(seed=SEED))
    for i in range(4):
        assert model.calibrated.layers[i].weights.tobytes() == base.layers[i].weights.tobytes()
    report = evaluate_holdout(model, holdout)
    logger.info(f"Holdout report: {report.to_dict()}")
    assert report.n_samples == 7
    assert np.all(report.relative_error < report.baseline_error)
    assert np.count_nonzero(report.relative_error < 0.10) >= 6


def test_learning_curve_converges(base_run, shot_split):
    base, normalizer, _ = base_run
    train, holdout = shot_split
    curve = learning_curve(base, train[:20], holdout, normalizer, transfer_train_config(seed=SEED))
    assert len(curve) == 20
    assert np.count_nonzero(curve.row(20) <= curve.row(3)) >= 6
