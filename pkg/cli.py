#!/usr/bin/env python3
"""
Calibration CLI – batch pipeline.

Commands:
  generate     write sim_database.csv and shots.csv from the synthetic generator
  train-base   fit the normalizer and train the simulation autoencoder
  transfer     retrain the decoder tail on all but the most recent shots
  curve        holdout error as shots are ingested one at a time
  predict      calibrated prediction for one simulation output vector
  evaluate     holdout report + actual_vs_predicted.csv

Every command is a pure function of (config, input files, seed) and prints
one JSON summary on stdout. Exit codes: 0 success, 1 usage error,
2 data/validation error.
"""

import argparse
import json
import logging
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

from numcore import NonFiniteError, SeededRng, ShapeError
from network import TrainingDivergedError
from calibration import (
    OBSERVABLE_KEYS, AutoencoderSpec, CalibratedModel, CalibrationError, ObservableVector,
    build_autoencoder, fit_normalizer, learning_curve, predict_experiment, split_holdout,
    train_base, transfer_learn,
)
from datagen import GeneratorConfig, generate_shot_series, generate_sim_array
from evaluation import (
    MetricError, evaluate_holdout, evaluate_training_fit, export_actual_vs_predicted,
    reconstruction_report, summarize_by_campaign,
)
from dataset_io import (
    DatasetError, read_shots, read_sim_database, write_actual_vs_predicted, write_learning_curve,
    write_shots, write_sim_database,
)
from model_store import ModelFormatError, load_model_file, save_model_file
from config import ConfigError, RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# Random stream ids derived from the run seed
STREAM_SIM_DATABASE = 0
STREAM_SHOTS = 1
STREAM_INIT = 2

DATA_ERRORS = (ConfigError, DatasetError, ModelFormatError, CalibrationError, MetricError,
               ShapeError, NonFiniteError, TrainingDivergedError, FileNotFoundError, OSError)


class UsageError(Exception):
    """Bad command-line usage (wrong arity, unknown command)."""


# =============================================================================
# Commands
# =============================================================================

def cmd_generate(cfg: RunConfig) -> Dict[str, Any]:
    seed = cfg.require_seed()
    n_sim = int(cfg.get('generate.n_sim'))
    n_shots = int(cfg.get('generate.n_shots'))
    if n_sim < 1 or n_shots < 1:
        raise ConfigError(f"Dataset sizes must be >= 1, got n_sim={n_sim}, n_shots={n_shots}")
    gen_cfg = GeneratorConfig.from_dict(dict(cfg.get('generator'), seed=seed))
    rng = gen_cfg.rng()

    sim = generate_sim_array(n_sim, rng.derive(STREAM_SIM_DATABASE))
    shots = generate_shot_series(n_shots, gen_cfg, rng.derive(STREAM_SHOTS))

    write_sim_database(cfg.path_for('sim_database'), sim)
    write_shots(cfg.path_for('shots'), shots)
    return {
        "sim_database": str(cfg.path_for('sim_database')),
        "shots": str(cfg.path_for('shots')),
        "n_sim": n_sim,
        "n_shots": n_shots,
    }


def cmd_train_base(cfg: RunConfig) -> Dict[str, Any]:
    seed = cfg.require_seed()
    data = read_sim_database(cfg.path_for('sim_database'))
    fraction = float(cfg.get('base.validation_fraction'))
    n_val = int(round(data.shape[0] * fraction))
    if not 1 <= n_val < data.shape[0] - 1:
        raise ConfigError(f"Validation fraction {fraction} leaves no usable split of {data.shape[0]} rows")
    train_rows, val_rows = data[:-n_val], data[-n_val:]

    normalizer = fit_normalizer(train_rows)
    spec = AutoencoderSpec()
    train_cfg = cfg.train_config('base', seed)
    ae = build_autoencoder(spec, SeededRng(seed, STREAM_INIT))
    trained, history = train_base(ae, train_rows, normalizer, train_cfg)

    report = reconstruction_report(trained, normalizer, val_rows)
    model = CalibratedModel.uncalibrated(trained, normalizer, spec, train_cfg)
    save_model_file(cfg.path_for('base_model'), model)
    return {
        "model": str(cfg.path_for('base_model')),
        "n_train": int(train_rows.shape[0]),
        "final_loss": history.final,
        "validation": report.to_dict(),
    }


def _load_split(cfg: RunConfig):
    shots = read_shots(cfg.path_for('shots'))
    holdout_size = int(cfg.get('holdout_size'))
    if len(shots) <= holdout_size:
        raise CalibrationError(f"Only {len(shots)} shots, need more than the holdout size {holdout_size}")
    return split_holdout(shots, holdout_size)


def cmd_transfer(cfg: RunConfig) -> Dict[str, Any]:
    seed = cfg.require_seed()
    base_model = load_model_file(cfg.path_for('base_model'))
    train_shots, holdout = _load_split(cfg)
    n_experiments = cfg.get('transfer.n_experiments')
    if n_experiments is not None:
        if not 1 <= int(n_experiments) <= len(train_shots):
            raise ConfigError(f"transfer.n_experiments must be in 1..{len(train_shots)}, got {n_experiments}")
        train_shots = train_shots[:int(n_experiments)]

    model = transfer_learn(base_model.base, train_shots, base_model.normalizer,
                           cfg.train_config('transfer', seed),
                           retrain_layers=int(cfg.get('transfer.retrain_layers')),
                           spec=base_model.spec, base_config=base_model.base_config)
    save_model_file(cfg.path_for('calibrated_model'), model)

    report = evaluate_holdout(model, holdout)
    fit = evaluate_training_fit(model, train_shots)
    for key, calibrated, baseline in zip(OBSERVABLE_KEYS, report.relative_error, report.baseline_error):
        logger.info(f"Holdout {key}: simulation {baseline:.2%} -> calibrated {calibrated:.2%}")
    return {
        "model": str(cfg.path_for('calibrated_model')),
        "n_experiments_used": model.n_experiments_used,
        "holdout_indices": [s.shot_index for s in holdout],
        "holdout": report.to_dict(),
        "training": fit.to_dict(),
    }


def cmd_curve(cfg: RunConfig) -> Dict[str, Any]:
    seed = cfg.require_seed()
    base_model = load_model_file(cfg.path_for('base_model'))
    train_shots, holdout = _load_split(cfg)
    curve = learning_curve(base_model.base, train_shots, holdout, base_model.normalizer,
                           cfg.train_config('transfer', seed),
                           retrain_layers=int(cfg.get('transfer.retrain_layers')),
                           include_baseline=bool(cfg.get('curve.include_baseline')),
                           workers=int(cfg.get('curve.workers')))
    write_learning_curve(cfg.path_for('learning_curve'), curve)
    return {
        "learning_curve": str(cfg.path_for('learning_curve')),
        "rows": len(curve),
        "final_error": dict(zip(OBSERVABLE_KEYS, curve.errors[-1].tolist())),
        "simulation_error": dict(zip(OBSERVABLE_KEYS, curve.simulation_error.tolist())),
    }


def cmd_predict(cfg: RunConfig, sim_values: Sequence[str]) -> Dict[str, Any]:
    if len(sim_values) != len(OBSERVABLE_KEYS):
        raise UsageError(f"predict needs {len(OBSERVABLE_KEYS)} values ({', '.join(OBSERVABLE_KEYS)}), "
                         f"got {len(sim_values)}")
    try:
        values = [float(v) for v in sim_values]
    except ValueError as e:
        raise UsageError(f"predict values must be numbers: {e}") from None
    model = load_model_file(cfg.path_for('calibrated_model'))
    prediction = predict_experiment(model, ObservableVector.from_array(values))
    return {"prediction": prediction.as_dict(), "n_experiments_used": model.n_experiments_used}


def cmd_evaluate(cfg: RunConfig) -> Dict[str, Any]:
    model = load_model_file(cfg.path_for('calibrated_model'))
    train_shots, holdout = _load_split(cfg)
    # only the chronological prefix the model was retrained on counts as training
    train_shots = train_shots[:model.n_experiments_used]
    rows = export_actual_vs_predicted(model, train_shots, holdout)
    write_actual_vs_predicted(cfg.path_for('actual_vs_predicted'), rows)
    return {
        "actual_vs_predicted": str(cfg.path_for('actual_vs_predicted')),
        "rows": len(rows),
        "holdout": evaluate_holdout(model, holdout).to_dict(),
        "campaigns": {label: r.to_dict() for label, r in summarize_by_campaign(model, train_shots + holdout).items()},
    }


# =============================================================================
# Entry point
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Transfer-learned simulation-to-experiment calibration")
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", type=int, help="Random seed (overrides the config)")
    parser.add_argument("--data-dir", help="Directory for datasets and models (overrides the config)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config key, e.g. --set base.epochs=100")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR")

    sub = parser.add_subparsers(dest="command")
    sub.add_parser("generate", help="Write synthetic sim_database.csv and shots.csv")
    sub.add_parser("train-base", help="Train the simulation autoencoder")
    sub.add_parser("transfer", help="Transfer-learn the decoder tail on the shot database")
    sub.add_parser("curve", help="Write learning_curve.csv")
    predict = sub.add_parser("predict", help="Calibrated prediction for one simulation output")
    predict.add_argument("values", nargs="*", help=" ".join(OBSERVABLE_KEYS))
    sub.add_parser("evaluate", help="Holdout report and actual_vs_predicted.csv")
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "train-base": cmd_train_base,
    "transfer": cmd_transfer,
    "curve": cmd_curve,
    "evaluate": cmd_evaluate,
}


def _configure_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s | %(levelname)s | %(name)s | %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage; our usage code is 1
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE

    try:
        cfg = RunConfig(args.config, args.overrides)
        if args.seed is not None:
            cfg.set('seed', args.seed)
        if args.data_dir is not None:
            cfg.set('data_dir', args.data_dir)
    except ConfigError as e:
        _configure_logging('INFO')
        logger.error(str(e))
        return EXIT_DATA
    _configure_logging(args.log_level or cfg.get('logging.level', 'INFO'))

    start_time = time.time()
    logger.info(f"Running {args.command}")
    try:
        if args.command == "predict":
            summary = cmd_predict(cfg, args.values)
        else:
            summary = COMMANDS[args.command](cfg)
    except UsageError as e:
        logger.error(str(e))
        return EXIT_USAGE
    except DATA_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_DATA
    except Exception:
        logger.exception(f"Unhandled exception in {args.command}")
        return EXIT_DATA

    logger.info(f"{args.command} completed in {time.time() - start_time:.2f}s")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
