"""
Model file persistence.

A model file is canonical JSON (sorted keys, fixed indentation) holding the
autoencoder spec, normalizer statistics, base and calibrated parameters,
training configs and a SHA-256 checksum of everything else. Floats are
written with Python's shortest round-trip repr, so loading reproduces every
parameter bit-for-bit. Any version mismatch, checksum mismatch, truncation
or non-finite value is a hard error.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from network import Activation, Layer, Mlp, TrainConfig
from calibration import AutoencoderSpec, CalibratedModel, Normalizer
from dataset_io import atomic_write_text

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Raised when a model file cannot be decoded into a complete model."""


# =============================================================================
# Encoding
# =============================================================================

def _encode_net(net: Mlp) -> Dict[str, Any]:
    return {
        "input_dim": net.input_dim,
        "layers": [
            {
                "activation": layer.activation.value,
                "biases": layer.biases.tolist(),
                "weights": layer.weights.tolist(),
            }
            for layer in net.layers
        ],
    }


def _encode_config(cfg: Optional[TrainConfig]) -> Optional[Dict[str, Any]]:
    return cfg.to_dict() if cfg is not None else None


def _canonical(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _checksum(payload: Dict[str, Any]) -> str:
    return hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()


def save_model(model: CalibratedModel) -> bytes:
    payload = {
        "format_version": FORMAT_VERSION,
        "autoencoder_spec": model.spec.to_dict(),
        "normalizer": {"mean": model.normalizer.mean.tolist(), "sd": model.normalizer.sd.tolist()},
        "base": _encode_net(model.base),
        "calibrated": _encode_net(model.calibrated),
        "n_experiments_used": model.n_experiments_used,
        "retrain_layers": model.retrain_layers,
        "training": {
            "base": _encode_config(model.base_config),
            "transfer": _encode_config(model.transfer_config),
        },
    }
    try:
        document = dict(payload, checksum=_checksum(payload))
        return _canonical(document).encode("utf-8")
    except ValueError as e:
        raise ModelFormatError(f"Model contains non-finite values: {e}") from e


# =============================================================================
# Decoding
# =============================================================================

def _decode_net(data: Dict[str, Any]) -> Mlp:
    layers = []
    for i, entry in enumerate(data["layers"]):
        weights = np.array(entry["weights"], dtype=np.float64)
        biases = np.array(entry["biases"], dtype=np.float64)
        layers.append(Layer(weights, biases, Activation(entry["activation"])))
    return Mlp(layers, int(data["input_dim"]))


def _decode_config(data: Optional[Dict[str, Any]]) -> Optional[TrainConfig]:
    return TrainConfig(**data) if data is not None else None


def load_model(raw: bytes) -> CalibratedModel:
    try:
        document = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"Model file is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ModelFormatError("Model file must contain a JSON object")

    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"Unsupported model format version {version!r}, expected {FORMAT_VERSION}")

    stored = document.pop("checksum", None)
    if stored != _checksum(document):
        raise ModelFormatError("Model file checksum mismatch: file is corrupted or was edited")

    try:
        spec = AutoencoderSpec(**document["autoencoder_spec"])
        normalizer = Normalizer(np.array(document["normalizer"]["mean"]), np.array(document["normalizer"]["sd"]))
        base = _decode_net(document["base"])
        calibrated = _decode_net(document["calibrated"])
        if base.widths != spec.widths:
            raise ModelFormatError(f"Stored network widths {base.widths} do not match spec {spec.widths}")
        return CalibratedModel(
            base=base,
            calibrated=calibrated,
            normalizer=normalizer,
            n_experiments_used=int(document["n_experiments_used"]),
            spec=spec,
            base_config=_decode_config(document["training"]["base"]),
            transfer_config=_decode_config(document["training"]["transfer"]),
            retrain_layers=int(document["retrain_layers"]),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"Model file is incomplete or invalid: {e}") from e


def save_model_file(path: Union[str, Path], model: CalibratedModel):
    atomic_write_text(path, save_model(model).decode("utf-8"))
    logger.info(f"Model saved to {path} (n_experiments_used={model.n_experiments_used})")


def load_model_file(path: Union[str, Path]) -> CalibratedModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file {path} does not exist")
    model = load_model(path.read_bytes())
    logger.info(f"Model loaded from {path}")
    return model
