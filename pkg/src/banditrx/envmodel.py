"""Glucose environment model: feature encoding plus a regression MLP.

The model G(s, a) predicts the fasting-glucose outcome from a state and
action pair and serves as the bandit's simulator. Inputs are encoded per
schema role: continuous features are z-scored, binary features pass
through as {0, 1}, and multi-level categoricals are one-hot over their
schema levels. Age is declared multi-level in the schema but carries
ordinal magnitude, so the encoder standardizes it as a continuous input
instead of spending 63 one-hot slots on it.

Normalization statistics come from the training split only, and the
checkpoint retains the parameters of the best validation epoch.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .aggregate import Sample, sample_matrices
from .core import FeatureSchema
from .errors import ConfigError, DataQualityError, NumericError
from .numeric import (MlpModel, mlp_forward, mlp_gradient, mlp_init, model_from_dict,
                      model_to_dict, optimizer_init, optimizer_step)

log = logging.getLogger(__name__)

# Categorical-by-schema features that the encoder standardizes as numeric.
NUMERIC_OVERRIDES = frozenset({"RIDAGEYR"})


@dataclass(frozen=True)
class FeatureCodec:
    """Encoding rule for one schema feature."""

    name: str
    mode: str                      # continuous | binary | onehot
    mean: float = 0.0
    std: float = 1.0
    levels: tuple[int, ...] = ()
    degenerate: bool = False       # zero observed variance; std pinned to 1

    def __post_init__(self):
        if self.mode not in ("continuous", "binary", "onehot"):
            raise ConfigError(f"unknown codec mode {self.mode!r}")
        if self.mode == "continuous" and self.std <= 0:
            raise ConfigError(f"codec {self.name!r}: standard deviation must be > 0")
        if self.mode == "onehot" and not self.levels:
            raise ConfigError(f"codec {self.name!r}: one-hot codec needs levels")

    @property
    def width(self) -> int:
        return len(self.levels) if self.mode == "onehot" else 1

    def to_dict(self) -> dict:
        return {"name": self.name, "mode": self.mode, "mean": self.mean,
                "std": self.std, "levels": list(self.levels), "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureCodec":
        return cls(d["name"], d["mode"], float(d["mean"]), float(d["std"]),
                   tuple(int(v) for v in d["levels"]), bool(d["degenerate"]))


def _fit_codecs(schema: FeatureSchema, features, columns: np.ndarray) -> tuple[FeatureCodec, ...]:
    codecs = []
    for j, feat in enumerate(features):
        col = columns[:, j]
        if feat.kind.is_continuous or feat.name in NUMERIC_OVERRIDES:
            mean = float(col.mean())
            std = float(col.std(ddof=0))
            degenerate = std == 0.0
            if degenerate:
                log.warning("feature %s has zero variance; std pinned to 1", feat.name)
            codecs.append(FeatureCodec(feat.name, "continuous", mean,
                                       std if std > 0 else 1.0, (), degenerate))
        elif feat.kind.is_binary:
            codecs.append(FeatureCodec(feat.name, "binary"))
        else:
            codecs.append(FeatureCodec(feat.name, "onehot", levels=feat.kind.levels))
    return tuple(codecs)


def _encode_block(codecs: Sequence[FeatureCodec], raw: np.ndarray) -> np.ndarray:
    """raw (B, n_features) in schema order -> encoded (B, sum widths)."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    parts = []
    for j, c in enumerate(codecs):
        col = raw[:, j]
        if c.mode == "continuous":
            parts.append(((col - c.mean) / c.std)[:, None])
        elif c.mode == "binary":
            parts.append(col[:, None])
        else:
            levels = np.array(c.levels, dtype=np.float64)
            onehot = (col[:, None] == levels[None, :]).astype(np.float64)
            bad = onehot.sum(axis=1) != 1
            if bad.any():
                v = col[np.flatnonzero(bad)[0]]
                raise ValueError(f"unknown level {v!r} for categorical feature {c.name!r}")
            parts.append(onehot)
    return np.concatenate(parts, axis=1)


def _decode_block(codecs: Sequence[FeatureCodec], enc: np.ndarray) -> np.ndarray:
    enc = np.atleast_2d(np.asarray(enc, dtype=np.float64))
    out = np.empty((enc.shape[0], len(codecs)))
    pos = 0
    for j, c in enumerate(codecs):
        block = enc[:, pos:pos + c.width]
        if c.mode == "continuous":
            out[:, j] = block[:, 0] * c.std + c.mean
        elif c.mode == "binary":
            out[:, j] = (block[:, 0] >= 0.5).astype(np.float64)
        else:
            out[:, j] = np.array(c.levels, dtype=np.float64)[np.argmax(block, axis=1)]
        pos += c.width
    return out


@dataclass(frozen=True)
class Encoder:
    """Fitted state/action encoding with frozen normalization statistics."""

    state_codecs: tuple[FeatureCodec, ...]
    action_codecs: tuple[FeatureCodec, ...]
    schema_fingerprint: str

    @classmethod
    def fit(cls, schema: FeatureSchema, states: np.ndarray, actions: np.ndarray) -> "Encoder":
        return cls(_fit_codecs(schema, schema.state_features, states),
                   _fit_codecs(schema, schema.action_features, actions),
                   schema.fingerprint())

    @property
    def state_dim(self) -> int:
        return sum(c.width for c in self.state_codecs)

    @property
    def action_dim(self) -> int:
        return sum(c.width for c in self.action_codecs)

    def encode_state(self, states: np.ndarray) -> np.ndarray:
        return _encode_block(self.state_codecs, states)

    def encode_action(self, actions: np.ndarray) -> np.ndarray:
        return _encode_block(self.action_codecs, actions)

    def encode(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.concatenate([self.encode_state(states), self.encode_action(actions)], axis=1)

    def decode_state(self, enc: np.ndarray) -> np.ndarray:
        return _decode_block(self.state_codecs, enc)

    def decode_action(self, enc: np.ndarray) -> np.ndarray:
        return _decode_block(self.action_codecs, enc)

    def to_dict(self) -> dict:
        return {"state_codecs": [c.to_dict() for c in self.state_codecs],
                "action_codecs": [c.to_dict() for c in self.action_codecs],
                "schema_fingerprint": self.schema_fingerprint}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Encoder":
        return cls(tuple(FeatureCodec.from_dict(c) for c in d["state_codecs"]),
                   tuple(FeatureCodec.from_dict(c) for c in d["action_codecs"]),
                   d["schema_fingerprint"])


def encode_state_action(encoder: Encoder, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Flat encoded (state ⊕ action) vector(s) for the environment network."""
    return encoder.encode(state, action)


# ---------------------------------------------------------------------------
# Environment model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvModel:
    mlp: MlpModel
    encoder: Encoder
    target_mean: float
    target_std: float

    def __post_init__(self):
        if self.target_std <= 0:
            raise ConfigError("target standard deviation must be > 0")
        expected = self.encoder.state_dim + self.encoder.action_dim
        if self.mlp.sizes[0] != expected:
            raise ConfigError(
                f"network input width {self.mlp.sizes[0]} != encoded dimension {expected}")

    @property
    def schema_fingerprint(self) -> str:
        return self.encoder.schema_fingerprint


@dataclass(frozen=True)
class EpochMetric:
    epoch: int
    train_mse: float
    val_mse: float


def metrics_to_csv(metrics: Sequence[EpochMetric]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_mse", "val_mse"])
    for m in metrics:
        w.writerow([m.epoch, repr(m.train_mse), repr(m.val_mse)])
    return buf.getvalue()


def train_env(samples: Sequence[Sample], schema: FeatureSchema, split: float = 0.2,
              epochs: int = 1000, batch_size: int = 64, seed: int = 0,
              hidden: tuple[int, ...] = (64, 64), lr: float = 1e-3,
              ) -> tuple[EnvModel, list[EpochMetric]]:
    """Fit G(s, a) -> glucose by minibatch Adam on z-scored inputs/targets.

    The sample set is shuffled once per the seed into train/validation
    splits; normalization is fitted on the training split. Returns the
    parameters from the epoch with the lowest validation MSE together with
    the per-epoch MSE curve (reported in squared glucose units).
    """
    if len(samples) < 10:
        raise DataQualityError(f"need at least 10 samples to train, got {len(samples)}")
    if not 0.0 < split < 1.0:
        raise ValueError(f"validation split must lie in (0, 1), got {split}")
    if epochs < 1 or batch_size < 1:
        raise ValueError("epochs and batch size must be >= 1")

    states, actions, glucose = sample_matrices(samples)
    n = states.shape[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * split)))
    if n_val >= n:
        raise DataQualityError("validation split leaves no training samples")
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    encoder = Encoder.fit(schema, states[train_idx], actions[train_idx])
    x_all = encoder.encode(states, actions)
    t_mean = float(glucose[train_idx].mean())
    t_std = float(glucose[train_idx].std(ddof=0))
    if t_std == 0.0:
        log.warning("constant glucose target; std pinned to 1")
        t_std = 1.0
    y_all = (glucose - t_mean) / t_std

    x_train, y_train = x_all[train_idx], y_all[train_idx][:, None]
    x_val, y_val = x_all[val_idx], y_all[val_idx][:, None]

    sizes = (x_all.shape[1], *hidden, 1)
    activations = tuple(["relu"] * len(hidden) + ["identity"])
    model = mlp_init(sizes, activations, seed=int(rng.integers(2 ** 31)))
    opt = optimizer_init(model, lr=lr)

    def full_mse(m: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
        pred = mlp_forward(m, x)
        return float(np.mean((pred - y) ** 2)) * t_std ** 2

    best_val = np.inf
    best_model = model
    metrics: list[EpochMetric] = []
    n_train = x_train.shape[0]
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n_train)
        for start in range(0, n_train, batch_size):
            idx = order[start:start + batch_size]
            grads, loss = mlp_gradient(model, x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            model, opt = optimizer_step(model, grads, opt)
        train_mse = full_mse(model, x_train, y_train)
        val_mse = full_mse(model, x_val, y_val)
        if not (np.isfinite(train_mse) and np.isfinite(val_mse)):
            raise NumericError(f"non-finite epoch MSE at epoch {epoch}")
        metrics.append(EpochMetric(epoch, train_mse, val_mse))
        if val_mse < best_val:
            best_val = val_mse
            best_model = model

    return EnvModel(best_model, encoder, t_mean, t_std), metrics


def predict_glucose(model: EnvModel, state: np.ndarray, action: np.ndarray,
                    schema: FeatureSchema | None = None) -> float:
    """Denormalized scalar glucose prediction; pure and deterministic."""
    if schema is not None and schema.fingerprint() != model.schema_fingerprint:
        raise ConfigError("environment model was trained under a different schema")
    out = predict_glucose_batch(model, np.atleast_2d(state), np.atleast_2d(action))
    return float(out[0])


def predict_glucose_batch(model: EnvModel, states: np.ndarray,
                          actions: np.ndarray) -> np.ndarray:
    x = model.encoder.encode(states, actions)
    pred = mlp_forward(model.mlp, x)[:, 0]
    if not np.all(np.isfinite(pred)):
        raise NumericError("environment model produced non-finite glucose")
    return pred * model.target_std + model.target_mean


def predict_from_encoded(model: EnvModel, encoded: np.ndarray) -> np.ndarray:
    """Prediction from an already-encoded (state ⊕ action) matrix; used by
    the bandit loop, which assembles encodings directly from policy output."""
    pred = mlp_forward(model.mlp, np.atleast_2d(encoded))[:, 0]
    if not np.all(np.isfinite(pred)):
        raise NumericError("environment model produced non-finite glucose")
    return pred * model.target_std + model.target_mean


def save_env(model: EnvModel, path: str | Path) -> None:
    doc = {"format": "banditrx-env", "version": 1,
           "mlp": model_to_dict(model.mlp), "encoder": model.encoder.to_dict(),
           "target_mean": model.target_mean, "target_std": model.target_std}
    Path(path).write_text(json.dumps(doc))


def load_env(path: str | Path) -> EnvModel:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"environment model file not found: {p}")
    doc = json.loads(p.read_text())
    if doc.get("format") != "banditrx-env":
        raise ConfigError(f"{p}: not an environment model checkpoint")
    return EnvModel(model_from_dict(doc["mlp"]), Encoder.from_dict(doc["encoder"]),
                    float(doc["target_mean"]), float(doc["target_std"]))
