"""HTTP inference service tests.

The module fixture assembles an artifacts directory by hand: the packaged
schema, an untrained policy, and an environment model rigged to predict
the glucose level at which the risk map is exactly zero. That makes the
score fields easy to pin down while every request path stays realistic.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

from banditrx.bandit import init_actor, save_policy
from banditrx.core import default_schema
from banditrx.envmodel import Encoder, EnvModel, save_env
from banditrx.errors import ConfigError
from banditrx.numeric import MlpModel
from banditrx.service import create_app, load_artifacts

# glucose level where the quadratic log-risk crosses zero
ROOT_BG = 138.88973299799676


def _raw_matrix(features, n, rng):
    cols = []
    for f in features:
        kind = f.kind
        if kind.is_continuous:
            cols.append(rng.uniform(kind.low, kind.high, n))
        elif kind.is_binary:
            cols.append(rng.integers(0, 2, n).astype(float))
        else:
            cols.append(rng.choice(np.array(kind.levels, dtype=float), n))
    return np.column_stack(cols)


def _valid_payload(features):
    out = {}
    for f in features:
        kind = f.kind
        if kind.is_continuous:
            out[f.name] = round((kind.low + kind.high) / 2, 3)
        elif kind.is_binary:
            out[f.name] = 1.0
        else:
            out[f.name] = float(kind.levels[0])
    return out


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    root = tmp_path_factory.mktemp("artifacts")
    schema = default_schema()
    rng = np.random.default_rng(11)
    states = _raw_matrix(schema.state_features, 50, rng)
    actions = _raw_matrix(schema.action_features, 50, rng)
    encoder = Encoder.fit(schema, states, actions)
    d = encoder.state_dim + encoder.action_dim
    # zero network + target mean at the risk root: every prediction is ROOT_BG
    mlp = MlpModel((d, 1), ("identity",), (np.zeros((d, 1)),), (np.zeros(1),))
    env = EnvModel(mlp, encoder, target_mean=ROOT_BG, target_std=1.0)
    save_env(env, root / "env.json")
    save_policy(init_actor(encoder, schema, hidden=(8, 8), seed=3),
                root / "policy.json")
    (root / "schema.json").write_text(json.dumps(schema.to_dict()))
    return {"root": root, "schema": schema}


@pytest.fixture(scope="module")
def client(artifacts):
    return TestClient(create_app(artifacts["root"]))


@pytest.fixture(scope="module")
def state_payload(artifacts):
    return _valid_payload(artifacts["schema"].state_features)


@pytest.fixture(scope="module")
def action_payload(artifacts):
    return _valid_payload(artifacts["schema"].action_features)


def test_unloaded_app_answers_503(state_payload):
    bare = TestClient(create_app())
    assert bare.get("/metadata").status_code == 503
    r = bare.post("/recommend", json={"state": state_payload})
    assert r.status_code == 503
    assert "not loaded" in r.json()["detail"]


def test_metadata_descriptors(client, artifacts):
    doc = client.get("/metadata").json()
    schema = artifacts["schema"]
    assert doc["schema_fingerprint"] == schema.fingerprint()
    assert doc["outcome"]["name"] == "LBXGLUSI"
    features = doc["features"]
    assert len(features) == 27
    by_kind = {}
    for f in features:
        assert set(f) == {"name", "role", "kind", "unit", "label", "range",
                          "levels"}
        by_kind[(f["role"], f["kind"])] = by_kind.get((f["role"], f["kind"]), 0) + 1
        if f["kind"] == "continuous":
            lo, hi = f["range"]
            assert lo < hi
        elif f["kind"] == "categorical":
            assert len(f["levels"]) >= 3
    assert by_kind == {("state", "continuous"): 7, ("state", "binary"): 1,
                       ("state", "categorical"): 6,
                       ("action", "continuous"): 11, ("action", "binary"): 2}
    assert set(doc["model_versions"]) == {"policy", "env", "schema", "package"}


def test_recommend_returns_full_action(client, artifacts, state_payload):
    r = client.post("/recommend", json={"state": state_payload})
    assert r.status_code == 200, r.text
    doc = r.json()
    assert set(doc) == {"action", "predicted_glucose", "risk", "reward", "mode"}
    assert doc["mode"] == "deterministic"
    schema = artifacts["schema"]
    assert set(doc["action"]) == {f.name for f in schema.action_features}
    for f in schema.action_features:
        v = doc["action"][f.name]
        if f.kind.is_binary:
            assert v in (0, 1)
        else:
            assert f.kind.low <= v <= f.kind.high


def test_recommend_scores_at_risk_root(client, state_payload):
    doc = client.post("/recommend", json={"state": state_payload}).json()
    # the rigged environment always predicts the zero-risk glucose level
    assert abs(doc["predicted_glucose"] - ROOT_BG) < 1e-9
    assert abs(doc["risk"]) < 1e-9
    assert doc["reward"] == -doc["risk"]


def test_recommend_is_pure(client, state_payload):
    body = {"state": state_payload}
    first = client.post("/recommend", json=body).content
    for _ in range(5):
        assert client.post("/recommend", json=body).content == first


def test_recommend_concurrent_responses_identical(client, state_payload):
    body = {"state": state_payload}
    reference = client.post("/recommend", json=body).content

    def hit(_):
        return client.post("/recommend", json=body).content

    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(hit, range(32)))
    assert all(r == reference for r in results)


def test_recommend_stochastic_seeding(client, state_payload):
    a = client.post("/recommend", json={"state": state_payload,
                                        "mode": "stochastic", "seed": 1})
    b = client.post("/recommend", json={"state": state_payload,
                                        "mode": "stochastic", "seed": 1})
    c = client.post("/recommend", json={"state": state_payload,
                                        "mode": "stochastic", "seed": 2})
    assert a.status_code == 200, a.text
    assert a.content == b.content
    assert a.json()["action"] != c.json()["action"]


def test_whatif_scores_given_action(client, state_payload, action_payload):
    body = {"state": state_payload, "action": action_payload}
    r = client.post("/whatif", json=body)
    assert r.status_code == 200, r.text
    doc = r.json()
    assert set(doc) == {"predicted_glucose", "risk", "reward"}
    assert abs(doc["predicted_glucose"] - ROOT_BG) < 1e-9
    assert client.post("/whatif", json=body).content == r.content


def test_validation_collects_every_bad_field(client, artifacts, state_payload):
    schema = artifacts["schema"]
    bad = dict(state_payload)
    dropped = schema.state_features[0].name
    del bad[dropped]
    bad["RIDAGEYR"] = 9999.0
    bad["BOGUS"] = 1.0
    r = client.post("/recommend", json={"state": bad})
    assert r.status_code == 422
    detail = r.json()["detail"]
    assert {e["field"] for e in detail} == {dropped, "RIDAGEYR", "BOGUS"}
    for e in detail:
        assert set(e) == {"field", "error"} and e["error"]


def test_validation_binary_and_level_errors(client, artifacts, state_payload):
    schema = artifacts["schema"]
    binary = next(f for f in schema.state_features if f.kind.is_binary)
    categorical = next(f for f in schema.state_features if f.kind.is_categorical)
    bad = dict(state_payload)
    bad[binary.name] = 0.5
    bad[categorical.name] = 999.0
    detail = client.post("/recommend", json={"state": bad}).json()["detail"]
    errors = {e["field"]: e["error"] for e in detail}
    assert "0 or 1" in errors[binary.name]
    assert "not among levels" in errors[categorical.name]


def test_whatif_validates_action_fields(client, artifacts, state_payload,
                                        action_payload):
    schema = artifacts["schema"]
    cont = next(f for f in schema.action_features if f.kind.is_continuous)
    bad = dict(action_payload)
    bad[cont.name] = cont.kind.high + 1.0
    r = client.post("/whatif", json={"state": state_payload, "action": bad})
    assert r.status_code == 422
    assert [e["field"] for e in r.json()["detail"]] == [cont.name]


def test_cors_preflight_allows_browser_clients(client):
    r = client.options("/recommend", headers={
        "Origin": "http://localhost:5173",
        "Access-Control-Request-Method": "POST"})
    assert r.status_code == 200
    assert r.headers["access-control-allow-origin"] == "*"


def test_openapi_document_lists_endpoints(client):
    doc = client.get("/openapi.json").json()
    assert {"/metadata", "/recommend", "/whatif"} <= set(doc["paths"])


def test_load_artifacts_missing_file(artifacts, tmp_path):
    partial = tmp_path / "partial"
    partial.mkdir()
    for name in ("policy.json", "schema.json"):
        (partial / name).write_bytes((artifacts["root"] / name).read_bytes())
    with pytest.raises(ConfigError, match="env.json"):
        load_artifacts(partial)


def test_load_artifacts_fingerprint_mismatch(artifacts, tmp_path):
    altered = tmp_path / "altered"
    altered.mkdir()
    for name in ("policy.json", "env.json"):
        (altered / name).write_bytes((artifacts["root"] / name).read_bytes())
    doc = artifacts["schema"].to_dict()
    victim = artifacts["schema"].state_features[-1].name
    doc["features"] = [f for f in doc["features"] if f["name"] != victim]
    assert len(doc["features"]) == 27
    (altered / "schema.json").write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="different schema"):
        load_artifacts(altered)
