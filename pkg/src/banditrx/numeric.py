"""Minimal dense neural-network substrate.

Fixed-architecture fully connected networks over float64 numpy arrays:
forward pass, exact reverse-mode gradients, an adaptive-moment
first-order optimizer, and deterministic serialization. Models are
values; every update returns a new model, so trained models can be
shared across threads without locks.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError

ACTIVATIONS = ("relu", "tanh", "identity")
_ACT_TAG = {name: i for i, name in enumerate(ACTIVATIONS)}

_MAGIC = b"BRXM"
_FORMAT_VERSION = 1


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass(frozen=True)
class MlpModel:
    """Layer sizes, per-layer weights/biases, per-layer activation names.

    ``sizes`` has one entry per layer including input; ``weights[i]`` maps
    layer i to layer i+1 and has shape (sizes[i], sizes[i+1]).
    """

    sizes: tuple[int, ...]
    activations: tuple[str, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def mlp_init(sizes, activations, seed: int) -> MlpModel:
    """Zero-mean scaled-uniform weights (scale 1/sqrt fan-in), zero biases;
    bit-reproducible per seed."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2:
        raise ConfigError("need at least an input and an output layer")
    if any(s < 1 for s in sizes):
        raise ConfigError(f"layer sizes must be positive, got {sizes}")
    activations = tuple(activations)
    if len(activations) != len(sizes) - 1:
        raise ConfigError("need one activation per non-input layer")
    for a in activations:
        if a not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {a!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, activations, tuple(weights), tuple(biases))


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    """Affine + activation composition. Accepts (d,) or (batch, d)."""
    h, single = _as_batch(x)
    if h.shape[1] != model.sizes[0]:
        raise ConfigError(f"input dim {h.shape[1]} != model input {model.sizes[0]}")
    for w, b, act in zip(model.weights, model.biases, model.activations):
        h = _act(act, h @ w + b)
    return h[0] if single else h


def forward_cache(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Forward pass keeping pre-activations and activations for backprop.
    Input must already be (batch, d)."""
    if x.ndim != 2 or x.shape[1] != model.sizes[0]:
        raise ConfigError(f"expected batch input of dim {model.sizes[0]}, got shape {x.shape}")
    a = x
    cache = [(None, x)]
    for w, b, act in zip(model.weights, model.biases, model.activations):
        z = a @ w + b
        a = _act(act, z)
        cache.append((z, a))
    return a, cache


@dataclass(frozen=True)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(tuple(w * factor for w in self.weights),
                         tuple(b * factor for b in self.biases))

    @classmethod
    def add(cls, a: "Gradients", b: "Gradients") -> "Gradients":
        return cls(tuple(x + y for x, y in zip(a.weights, b.weights)),
                   tuple(x + y for x, y in zip(a.biases, b.biases)))


def backward(model: MlpModel, cache: list, grad_out: np.ndarray) -> tuple[Gradients, np.ndarray]:
    """Reverse accumulation from dLoss/d(output). Returns parameter
    gradients and the gradient w.r.t. the network input."""
    da = grad_out
    gws: list[np.ndarray | None] = [None] * len(model.weights)
    gbs: list[np.ndarray | None] = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        z, a = cache[i + 1]
        dz = da * _act_grad(model.activations[i], z, a)
        a_prev = cache[i][1]
        gws[i] = a_prev.T @ dz
        gbs[i] = dz.sum(axis=0)
        da = dz @ model.weights[i].T
    return Gradients(tuple(gws), tuple(gbs)), da


def mlp_gradient(model: MlpModel, x, targets) -> tuple[Gradients, float]:
    """Exact gradients of mean squared error over the batch.

    Loss = mean over batch of the squared error summed across output dims.
    """
    x = np.asarray(x, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if targets.ndim == 1:
        targets = targets[:, None] if targets.shape[0] == x.shape[0] else targets[None, :]
    if x.shape[0] == 0:
        raise ConfigError("batch is empty")
    pred, cache = forward_cache(model, x)
    for i, (z, a) in enumerate(cache[1:]):
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite forward values at layer {i + 1}")
    n = x.shape[0]
    err = pred - targets
    loss = float(np.sum(err * err) / n)
    grads, _ = backward(model, cache, 2.0 * err / n)
    return grads, loss


@dataclass(frozen=True)
class OptimState:
    """Adaptive-moment accumulators, shaped like the model parameters."""

    m_w: tuple[np.ndarray, ...]
    v_w: tuple[np.ndarray, ...]
    m_b: tuple[np.ndarray, ...]
    v_b: tuple[np.ndarray, ...]
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def optimizer_init(model: MlpModel, lr: float = 3e-4, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> OptimState:
    zeros_w = tuple(np.zeros_like(w) for w in model.weights)
    zeros_b = tuple(np.zeros_like(b) for b in model.biases)
    return OptimState(zeros_w, tuple(np.zeros_like(w) for w in model.weights),
                      zeros_b, tuple(np.zeros_like(b) for b in model.biases),
                      step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def optimizer_step(model: MlpModel, grads: Gradients,
                   state: OptimState) -> tuple[MlpModel, OptimState]:
    """One bias-corrected adaptive-moment update; returns new model and state."""
    t = state.step + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t

    def upd(p, g, m, v):
        m2 = b1 * m + (1.0 - b1) * g
        v2 = b2 * v + (1.0 - b2) * g * g
        p2 = p - state.lr * (m2 / corr1) / (np.sqrt(v2 / corr2) + eps)
        return p2, m2, v2

    new_w, new_mw, new_vw = [], [], []
    for p, g, m, v in zip(model.weights, grads.weights, state.m_w, state.v_w):
        p2, m2, v2 = upd(p, g, m, v)
        new_w.append(p2), new_mw.append(m2), new_vw.append(v2)
    new_b, new_mb, new_vb = [], [], []
    for p, g, m, v in zip(model.biases, grads.biases, state.m_b, state.v_b):
        p2, m2, v2 = upd(p, g, m, v)
        new_b.append(p2), new_mb.append(m2), new_vb.append(v2)

    model2 = replace(model, weights=tuple(new_w), biases=tuple(new_b))
    state2 = replace(state, m_w=tuple(new_mw), v_w=tuple(new_vw),
                     m_b=tuple(new_mb), v_b=tuple(new_vb), step=t)
    return model2, state2


# --- checkpoint serialization: versioned JSON or binary, round-trips bitwise ---

def model_to_dict(model: MlpModel) -> dict:
    return {
        "magic": _MAGIC.decode(),
        "version": _FORMAT_VERSION,
        "sizes": list(model.sizes),
        "activations": list(model.activations),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(doc: dict) -> MlpModel:
    if doc.get("magic") != _MAGIC.decode():
        raise ConfigError("not a model checkpoint (bad magic)")
    if doc.get("version") != _FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')}")
    sizes = tuple(doc["sizes"])
    return MlpModel(
        sizes,
        tuple(doc["activations"]),
        tuple(np.asarray(w, dtype=float).reshape(sizes[i], sizes[i + 1])
              for i, w in enumerate(doc["weights"])),
        tuple(np.asarray(b, dtype=float) for b in doc["biases"]),
    )


def save_mlp(model: MlpModel, path: str | Path, fmt: str = "json") -> None:
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(model_to_dict(model)))
    elif fmt == "binary":
        parts = [_MAGIC, struct.pack("<II", _FORMAT_VERSION, len(model.sizes))]
        parts.append(struct.pack(f"<{len(model.sizes)}I", *model.sizes))
        parts.append(bytes(_ACT_TAG[a] for a in model.activations))
        payload = b"".join(np.ascontiguousarray(arr).tobytes()
                           for pair in zip(model.weights, model.biases) for arr in pair)
        parts.append(struct.pack("<I", zlib.crc32(payload)))
        parts.append(payload)
        path.write_bytes(b"".join(parts))
    else:
        raise ConfigError(f"unknown checkpoint format {fmt!r}")


def load_mlp(path: str | Path) -> MlpModel:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] == _MAGIC:
        version, n_layers = struct.unpack_from("<II", blob, 4)
        if version != _FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {version}")
        off = 12
        sizes = struct.unpack_from(f"<{n_layers}I", blob, off)
        off += 4 * n_layers
        acts = tuple(ACTIVATIONS[t] for t in blob[off:off + n_layers - 1])
        off += n_layers - 1
        (crc,) = struct.unpack_from("<I", blob, off)
        off += 4
        payload = blob[off:]
        if zlib.crc32(payload) != crc:
            raise ConfigError(f"checkpoint {path} failed its checksum")
        weights, biases = [], []
        pos = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(payload, dtype=float, count=fan_in * fan_out, offset=pos)
            pos += 8 * fan_in * fan_out
            b = np.frombuffer(payload, dtype=float, count=fan_out, offset=pos)
            pos += 8 * fan_out
            weights.append(w.reshape(fan_in, fan_out).copy())
            biases.append(b.copy())
        return MlpModel(tuple(sizes), acts, tuple(weights), tuple(biases))
    return model_from_dict(json.loads(blob.decode()))
