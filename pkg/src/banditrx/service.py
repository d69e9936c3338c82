"""Read-only HTTP inference service over trained artifacts.

Loads a policy checkpoint, the environment model, and the feature schema
from one artifacts directory, then answers three questions: what does the
schema look like (/metadata), what would the policy prescribe for a patient
(/recommend), and what outcome would a hand-chosen action get (/whatif).

Training never happens here; the loaded state is immutable and every
request is a pure function of it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import __version__
from .bandit import ActorPolicy, load_policy, recommend
from .core import FeatureSchema, load_schema
from .envmodel import EnvModel, load_env, predict_glucose
from .errors import ConfigError
from .reward import DOMAIN_FLOOR, MagniParams, magni_risk

ARTIFACT_FILES = {"policy": "policy.json", "env": "env.json",
                  "schema": "schema.json"}


@dataclass(frozen=True)
class ServiceState:
    """Everything a request needs, loaded once and never mutated."""

    policy: ActorPolicy
    env: EnvModel
    schema: FeatureSchema
    reward_params: MagniParams
    versions: dict[str, str]


def load_artifacts(artifacts_dir: str | Path,
                   reward_params: MagniParams | None = None) -> ServiceState:
    """Load and cross-check the three artifacts from one directory."""
    root = Path(artifacts_dir)
    paths = {}
    for key, name in ARTIFACT_FILES.items():
        p = root / name
        if not p.exists():
            raise ConfigError(f"artifact not found: {p}")
        paths[key] = p
    schema = load_schema(paths["schema"])
    policy = load_policy(paths["policy"])
    env = load_env(paths["env"])
    fp = schema.fingerprint()
    if policy.schema_fingerprint != fp:
        raise ConfigError("policy was trained under a different schema")
    if env.schema_fingerprint != fp:
        raise ConfigError("environment model was trained under a different schema")
    versions = {key: hashlib.sha256(p.read_bytes()).hexdigest()[:12]
                for key, p in paths.items()}
    versions["package"] = __version__
    return ServiceState(policy, env, schema, reward_params or MagniParams(),
                        versions)


# ---------------------------------------------------------------------------
# Request/response bodies
# ---------------------------------------------------------------------------

class RecommendRequest(BaseModel):
    state: dict[str, float]
    mode: Literal["deterministic", "stochastic"] = "deterministic"
    seed: int | None = None


class WhatIfRequest(BaseModel):
    state: dict[str, float]
    action: dict[str, float]


def _feature_descriptor(feat) -> dict:
    kind = feat.kind
    return {"name": feat.name, "role": feat.role, "kind": kind.kind,
            "unit": kind.unit, "label": feat.label,
            "range": [kind.low, kind.high] if kind.is_continuous else None,
            "levels": list(kind.levels) if kind.is_categorical else None}


def _validate_fields(schema: FeatureSchema, payload: dict[str, float],
                     role: str) -> np.ndarray:
    """Vector in schema feature order, or a 422 listing every bad field."""
    features = schema.with_role(role)
    errors: list[dict[str, str]] = []
    known = {f.name for f in features}
    for name in payload:
        if name not in known:
            errors.append({"field": name,
                           "error": f"not a {role} feature in this schema"})
    values = []
    for feat in features:
        if feat.name not in payload:
            errors.append({"field": feat.name, "error": f"missing {role} feature"})
            continue
        v = float(payload[feat.name])
        kind = feat.kind
        if not np.isfinite(v):
            errors.append({"field": feat.name, "error": "value must be finite"})
        elif kind.is_continuous:
            if not kind.low <= v <= kind.high:
                errors.append({"field": feat.name,
                               "error": f"value {v:g} outside "
                                        f"[{kind.low:g}, {kind.high:g}]"})
        elif kind.is_binary:
            if v not in (0.0, 1.0):
                errors.append({"field": feat.name,
                               "error": f"binary feature must be 0 or 1, got {v:g}"})
        else:
            if v != int(v) or int(v) not in kind.levels:
                errors.append({"field": feat.name,
                               "error": f"value {v:g} not among levels "
                                        f"{list(kind.levels)}"})
        values.append(v)
    if errors:
        raise HTTPException(status_code=422, detail=errors)
    return np.array(values, dtype=np.float64)


def _score(state: ServiceState, s: np.ndarray, a: np.ndarray) -> dict:
    glucose = predict_glucose(state.env, s, a)
    risk = magni_risk(max(glucose, DOMAIN_FLOOR), state.reward_params)
    return {"predicted_glucose": glucose, "risk": risk, "reward": -risk}


def create_app(artifacts_dir: str | Path | None = None,
               cors_origins: tuple[str, ...] = ("*",)) -> FastAPI:
    """App factory; with no artifacts directory the API answers 503 until
    `attach_artifacts` is called."""
    app = FastAPI(title="banditrx inference service", version=__version__)
    app.add_middleware(CORSMiddleware, allow_origins=list(cors_origins),
                       allow_methods=["*"], allow_headers=["*"])
    app.state.service = None
    if artifacts_dir is not None:
        attach_artifacts(app, artifacts_dir)

    def ready() -> ServiceState:
        state = app.state.service
        if state is None:
            raise HTTPException(status_code=503,
                                detail="artifacts are not loaded yet")
        return state

    @app.get("/metadata")
    def metadata() -> dict:
        state = ready()
        features = [_feature_descriptor(f)
                    for f in state.schema.features if f.role != "outcome"]
        return {"schema_name": state.schema.name,
                "schema_fingerprint": state.schema.fingerprint(),
                "model_versions": state.versions,
                "outcome": _feature_descriptor(state.schema.outcome_feature),
                "features": features}

    @app.post("/recommend")
    def recommend_endpoint(body: RecommendRequest) -> dict:
        state = ready()
        s = _validate_fields(state.schema, body.state, "state")
        rng = None
        if body.mode == "stochastic":
            rng = np.random.default_rng(body.seed)
        action_by_name = recommend(state.policy, state.env.encoder,
                                   state.schema, s, mode=body.mode, rng=rng)
        a = np.array([float(action_by_name[f.name])
                      for f in state.schema.action_features])
        return {"action": action_by_name, **_score(state, s, a),
                "mode": body.mode}

    @app.post("/whatif")
    def whatif_endpoint(body: WhatIfRequest) -> dict:
        state = ready()
        s = _validate_fields(state.schema, body.state, "state")
        a = _validate_fields(state.schema, body.action, "action")
        return _score(state, s, a)

    return app


def attach_artifacts(app: FastAPI, artifacts_dir: str | Path) -> None:
    app.state.service = load_artifacts(artifacts_dir)
