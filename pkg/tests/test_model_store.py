import numpy as np
import pytest

from numcore import SeededRng
from network import base_train_config, transfer_train_config
from calibration import (
    AutoencoderSpec, CalibratedModel, ObservableVector, build_autoencoder, fit_normalizer,
    predict_experiment, transfer_learn,
)
from datagen import GeneratorConfig, generate_shot_series, generate_sim_array
from model_store import FORMAT_VERSION, ModelFormatError, load_model, load_model_file, save_model, save_model_file


@pytest.fixture(scope="module")
def model():
    sim = generate_sim_array(200, SeededRng(3, 0))
    normalizer = fit_normalizer(sim)
    base = build_autoencoder(AutoencoderSpec(), SeededRng(3, 2))
    shots = generate_shot_series(6, GeneratorConfig(), SeededRng(3, 1))
    return transfer_learn(base, shots, normalizer, transfer_train_config(seed=3, epochs=2),
                          spec=AutoencoderSpec(), base_config=base_train_config(seed=3))


def test_round_trip_predictions(model):
    loaded = load_model(save_model(model))
    inputs = generate_sim_array(100, SeededRng(8))
    for row in inputs:
        sim = ObservableVector.from_array(row)
        a = predict_experiment(model, sim).to_array()
        b = predict_experiment(loaded, sim).to_array()
        assert np.max(np.abs(a - b)) <= 1e-12


def test_round_trip_is_exact(model):
    loaded = load_model(save_model(model))
    for x, y in zip(model.calibrated.layers + model.base.layers, loaded.calibrated.layers + loaded.base.layers):
        assert x.weights.tobytes() == y.weights.tobytes()
        assert x.biases.tobytes() == y.biases.tobytes()
    assert loaded.n_experiments_used == model.n_experiments_used == 6
    assert loaded.transfer_config == model.transfer_config
    assert loaded.base_config == model.base_config
    assert loaded.spec == model.spec
    assert np.array_equal(loaded.normalizer.sd, model.normalizer.sd)


def test_save_is_byte_stable(model):
    raw = save_model(model)
    assert raw == save_model(model)
    assert raw == save_model(load_model(raw))


def test_uncalibrated_model_round_trip(model):
    base_only = CalibratedModel.uncalibrated(model.base, model.normalizer, AutoencoderSpec())
    loaded = load_model(save_model(base_only))
    assert loaded.transfer_config is None
    assert loaded.n_experiments_used == 0


def test_corrupted_byte_fails(model):
    raw = bytearray(save_model(model))
    pos = raw.index(b'"weights"') + 40
    while not chr(raw[pos]).isdigit():
        pos += 1
    raw[pos] = ord('7') if raw[pos] != ord('7') else ord('3')
    with pytest.raises(ModelFormatError, match="checksum"):
        load_model(bytes(raw))


def test_truncated_file_fails(model):
    raw = save_model(model)
    with pytest.raises(ModelFormatError):
        load_model(raw[: len(raw) // 2])
    with pytest.raises(ModelFormatError):
        load_model(b"")


def test_unknown_version_fails(model):
    raw = save_model(model).replace(f'"format_version": {FORMAT_VERSION}'.encode(), b'"format_version": 99')
    with pytest.raises(ModelFormatError, match="version"):
        load_model(raw)


def test_non_finite_parameters_refused(model):
    broken = CalibratedModel.uncalibrated(model.base.copy(), model.normalizer, AutoencoderSpec())
    broken.calibrated.layers[0].weights[0, 0] = np.nan
    with pytest.raises(ModelFormatError):
        save_model(broken)


def test_file_helpers(model, tmp_path):
    path = tmp_path / "models" / "calibrated_model.json"
    save_model_file(path, model)
    assert path.read_bytes() == save_model(model)
    assert load_model_file(path).n_experiments_used == model.n_experiments_used
    assert not list(path.parent.glob("*.tmp"))
    with pytest.raises(FileNotFoundError):
        load_model_file(tmp_path / "absent.json")
