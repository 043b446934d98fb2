"""Mini-batch training with early stopping, inference and model files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError, ModelFileError, NumericError
from ..features import ScalerParams, inverse_target
from .network import LstmParams, backward, forward, init_params, param_shapes, validate_params
from .optim import AdamState, adam_step

FORMAT_TAG = "haulcast.lstm"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class LstmTrainConfig:
    hidden_size: int = 64
    learning_rate: float = 0.001
    clip_value: float = 0.5
    dropout_rate: float = 0.2
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ConfigError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.clip_value > 0:
            raise ConfigError(f"clip_value must be > 0, got {self.clip_value}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(f"validation_fraction must lie in (0, 1), got {self.validation_fraction}")


@dataclass
class TrainingHistory:
    """Per-epoch losses; ``initial_*`` are measured before the first update."""

    initial_train_mse: float
    initial_val_mse: float
    epochs: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_val_mse(self) -> float:
        if not self.epochs:
            return self.initial_val_mse
        return min(self.initial_val_mse, min(v for _, _, v in self.epochs))

    def __len__(self):
        return len(self.epochs)


def _mse(params: LstmParams, X: np.ndarray, y: np.ndarray) -> float:
    pred, _ = forward(params, X)
    return float(np.mean((pred - y) ** 2))


def train_lstm(windows, targets, config: LstmTrainConfig = LstmTrainConfig()):
    """Fit on scaled windows; returns (best parameters, TrainingHistory).

    The last ceil(validation_fraction * n) windows are held out
    chronologically; training stops after ``patience`` epochs without a
    lower validation MSE, or at ``max_epochs``.
    """
    X = np.asarray(windows, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 3 or len(X) != len(y):
        raise DataError("windows must be (N, T, D) with one target per window")
    n_val = math.ceil(config.validation_fraction * len(X))
    n_fit = len(X) - n_val
    if n_fit < 1 or n_val < 1:
        raise DataError(f"need at least 2 sequences after the validation split, got {len(X)}")
    X_fit, y_fit, X_val, y_val = X[:n_fit], y[:n_fit], X[n_fit:], y[n_fit:]

    rng = np.random.default_rng(config.seed)
    params = init_params(X.shape[2], config.hidden_size, rng)
    history = TrainingHistory(_mse(params, X_fit, y_fit), _mse(params, X_val, y_val))
    best, best_val, stale = params.copy(), history.initial_val_mse, 0
    state = AdamState.for_params(params)
    H = config.hidden_size
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n_fit)
        sq_err = 0.0
        for start in range(0, n_fit, config.batch_size):
            idx = order[start:start + config.batch_size]
            mask = None
            if config.dropout_rate > 0:
                mask = (rng.random((len(idx), H)) >= config.dropout_rate).astype(float)
            pred, cache = forward(params, X_fit[idx], True, mask, config.dropout_rate)
            resid = pred - y_fit[idx]
            sq_err += float(resid @ resid)
            grads = backward(params, cache, 2.0 * resid / len(idx))
            state, params = adam_step(state, params, grads, config.learning_rate, config.clip_value)
        val = _mse(params, X_val, y_val)
        if not math.isfinite(val):
            raise NumericError(f"validation loss became non-finite at epoch {epoch}")
        history.epochs.append((epoch, sq_err / n_fit, val))
        if val < best_val:
            best, best_val, stale = params.copy(), val, 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, history


def predict_lstm(params: LstmParams, windows, scaler: ScalerParams) -> np.ndarray:
    """Inference-mode predictions mapped back to tons."""
    X = np.asarray(windows, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.shape[-1] != len(scaler.mins):
        raise DataError(f"scaler declares {len(scaler.mins)} features, windows carry {X.shape[-1]}")
    if len(X) == 0:
        return np.empty(0)
    scaled, _ = forward(params, X)
    return inverse_target(scaler, np.atleast_1d(scaled))


def write_history_csv(history: TrainingHistory, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("epoch", "train_mse", "val_mse"))
        for epoch, tr, va in history.epochs:
            writer.writerow((epoch, repr(tr), repr(va)))
    return path


# ---------------------------------------------------------------------------
# persistence


def save_lstm(params: LstmParams, path: str | Path, scaler: ScalerParams | None = None,
              config: LstmTrainConfig | None = None, meta: dict | None = None) -> Path:
    """Write a versioned JSON model file; floats use repr so loading is exact."""
    path = Path(path)
    doc = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "input_dim": params.input_dim,
        "hidden_size": params.hidden_size,
        "config": asdict(config) if config else None,
        "scaler": scaler.to_dict() if scaler else None,
        "meta": meta or {},
        "weights": {k: np.asarray(v).tolist() for k, v in params.arrays.items()},
    }
    path.write_text(json.dumps(doc) + "\n", encoding="utf-8")
    return path


@dataclass
class LstmModelFile:
    params: LstmParams
    scaler: ScalerParams | None
    config: LstmTrainConfig | None
    meta: dict


def load_lstm(path: str | Path) -> LstmModelFile:
    path = Path(path)
    if not path.is_file():
        raise ModelFileError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ModelFileError(f"{path}: unreadable model file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
        raise ModelFileError(f"{path}: not an LSTM model file")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFileError(f"{path}: unsupported model version {doc.get('version')}")
    try:
        shapes = param_shapes(int(doc["input_dim"]), int(doc["hidden_size"]))
        arrays = {k: np.array(doc["weights"][k], dtype=float).reshape(shape) for k, shape in shapes.items()}
        params = LstmParams(arrays)
        validate_params(params)
        scaler = ScalerParams.from_dict(doc["scaler"]) if doc.get("scaler") else None
        config = LstmTrainConfig(**doc["config"]) if doc.get("config") else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: malformed model file ({exc})") from None
    return LstmModelFile(params, scaler, config, doc.get("meta", {}))
