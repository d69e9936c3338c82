"""Gower distances, medoid clustering, silhouette validation, filtering."""

import itertools

import numpy as np
import pytest
from sklearn.metrics import silhouette_score

from banditrx.cluster import (DistanceMatrix, GowerConfig, filter_clusters,
                              gower_matrix, gower_pair, pam, pca_contribution,
                              scan_k, silhouette)
from banditrx.core import Record
from banditrx.errors import ConfigError, DataQualityError
from conftest import categorical, continuous, record_set, schema_of


def _demo_schema():
    return schema_of(
        categorical("AGE", list(range(18, 81))),
        categorical("RETH", [1, 2, 3, 4, 5]),
        categorical("EDUC", [1, 2, 3, 4, 5]),
        categorical("MARTL", [1, 2, 3, 4, 5, 6]),
    )


def _cfg(ranges=None):
    return GowerConfig(features=("AGE", "RETH", "EDUC", "MARTL"),
                       ranges=ranges or {"AGE": 8.0},
                       numeric_features=frozenset({"AGE"}))


def test_gower_quarter_fixture_exact():
    # age spans the full frozen range (delta 1), three categoricals agree:
    # (1 + 0 + 0 + 0) / 4 = 0.25
    a = Record("a", "c", {"AGE": 30, "RETH": 2, "EDUC": 3, "MARTL": 1})
    b = Record("b", "c", {"AGE": 38, "RETH": 2, "EDUC": 3, "MARTL": 1})
    assert abs(gower_pair(a, b, _cfg()) - 0.25) < 1e-12


def test_gower_missing_excluded_from_both_sums():
    # AGE missing on one side: only the three categoricals count, one differs
    a = Record("a", "c", {"AGE": None, "RETH": 2, "EDUC": 3, "MARTL": 1})
    b = Record("b", "c", {"AGE": 38, "RETH": 2, "EDUC": 3, "MARTL": 2})
    assert gower_pair(a, b, _cfg()) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_gower_weights():
    cfg = GowerConfig(features=("AGE", "RETH"), weights={"AGE": 3.0},
                      ranges={"AGE": 10.0}, numeric_features=frozenset({"AGE"}))
    a = Record("a", "c", {"AGE": 20, "RETH": 1})
    b = Record("b", "c", {"AGE": 25, "RETH": 2})
    # (3*0.5 + 1*1) / 4
    assert gower_pair(a, b, cfg) == pytest.approx(2.5 / 4.0, abs=1e-12)


def test_gower_numeric_delta_clipped_to_one():
    cfg = _cfg(ranges={"AGE": 2.0})
    a = Record("a", "c", {"AGE": 20, "RETH": 1, "EDUC": 1, "MARTL": 1})
    b = Record("b", "c", {"AGE": 60, "RETH": 1, "EDUC": 1, "MARTL": 1})
    assert gower_pair(a, b, cfg) == pytest.approx(0.25, abs=1e-12)


def test_gower_properties_random_pairs():
    rng = np.random.default_rng(3)
    cfg = _cfg()
    for _ in range(300):
        va = {"AGE": int(rng.integers(18, 81)), "RETH": int(rng.integers(1, 6)),
              "EDUC": int(rng.integers(1, 6)), "MARTL": int(rng.integers(1, 7))}
        vb = {"AGE": int(rng.integers(18, 81)), "RETH": int(rng.integers(1, 6)),
              "EDUC": int(rng.integers(1, 6)), "MARTL": int(rng.integers(1, 7))}
        a, b = Record("a", "c", va), Record("b", "c", vb)
        d_ab = gower_pair(a, b, cfg)
        assert gower_pair(b, a, cfg) == d_ab
        assert 0.0 <= d_ab <= 1.0
        assert gower_pair(a, a, cfg) == 0.0
        if va != vb and d_ab == 0.0:
            # only numeric rounding inside the clip could do this; must not
            raise AssertionError(f"zero distance for distinct rows {va} {vb}")


def test_gower_matrix_matches_pairwise():
    rng = np.random.default_rng(5)
    schema = _demo_schema()
    rows = [{"AGE": int(rng.integers(18, 81)), "RETH": int(rng.integers(1, 6)),
             "EDUC": int(rng.integers(1, 6)), "MARTL": int(rng.integers(1, 7)),
             "y": 5.0} for _ in range(12)]
    rs = record_set(schema, rows)
    cfg = GowerConfig.from_records(rs, features=("AGE", "RETH", "EDUC", "MARTL"),
                                   numeric_features=("AGE",))
    m = gower_matrix(rs, cfg)
    for i in range(12):
        for j in range(12):
            expect = 0.0 if i == j else gower_pair(rs.records[i], rs.records[j], cfg)
            assert m.get(i, j) == pytest.approx(expect, abs=1e-15)


def test_gower_undefined_pair_rejected():
    schema = _demo_schema()
    rs = record_set(schema, [
        {"AGE": 30, "RETH": None, "EDUC": None, "MARTL": None, "y": 5.0},
        {"AGE": None, "RETH": 2, "EDUC": 3, "MARTL": 1, "y": 5.0},
    ])
    cfg = _cfg()
    with pytest.raises(DataQualityError) as e:
        gower_matrix(rs, cfg)
    assert "0" in str(e.value) and "1" in str(e.value)


def test_from_records_freezes_ranges():
    schema = _demo_schema()
    rs = record_set(schema, [{"AGE": 20, "RETH": 1, "EDUC": 1, "MARTL": 1, "y": 5.0},
                             {"AGE": 60, "RETH": 2, "EDUC": 2, "MARTL": 2, "y": 5.0}])
    cfg = GowerConfig.from_records(rs, features=("AGE", "RETH"),
                                   numeric_features=("AGE",))
    assert cfg.ranges["AGE"] == 40.0
    # constant numeric feature: range defaults to 1 (delta is always 0)
    rs2 = record_set(schema, [{"AGE": 30, "RETH": 1, "EDUC": 1, "MARTL": 1, "y": 5.0},
                              {"AGE": 30, "RETH": 2, "EDUC": 1, "MARTL": 1, "y": 5.0}])
    cfg2 = GowerConfig.from_records(rs2, features=("AGE", "RETH"),
                                    numeric_features=("AGE",))
    assert cfg2.ranges["AGE"] == 1.0
    assert GowerConfig.from_dict(cfg.to_dict()) == cfg


def test_gower_config_validation():
    with pytest.raises(ConfigError):
        GowerConfig(features=())
    with pytest.raises(ConfigError):
        GowerConfig(features=("A",), weights={"A": 0.0})
    with pytest.raises(ConfigError):
        GowerConfig(features=("A",), weights={"A": -1.0})
    with pytest.raises(ConfigError):
        GowerConfig(features=("A",), numeric_features=frozenset({"A"}))  # no range


# ---------------------------------------------------------------------------
# Distance matrix container
# ---------------------------------------------------------------------------

def _line_matrix(values, scale):
    n = len(values)
    full = np.abs(np.subtract.outer(values, values)) / scale
    return DistanceMatrix.from_full(full)


def test_distance_matrix_round_trip(tmp_path):
    m = _line_matrix([0.0, 1.0, 2.0, 10.0], 12.0)
    assert m.get(0, 3) == pytest.approx(10 / 12)
    assert m.get(3, 0) == m.get(0, 3)
    assert np.allclose(m.full(), m.full().T)
    p = tmp_path / "d.bin"
    m.save(p)
    again = DistanceMatrix.load(p)
    assert again.n == m.n
    assert np.array_equal(again.condensed, m.condensed)


def test_distance_matrix_corruption_detected(tmp_path):
    m = _line_matrix([0.0, 1.0, 2.0], 4.0)
    p = tmp_path / "d.bin"
    m.save(p)
    raw = bytearray(p.read_bytes())
    raw[-3] ^= 0x10
    p.write_bytes(bytes(raw))
    with pytest.raises(DataQualityError):
        DistanceMatrix.load(p)


def test_distance_matrix_range_validation():
    with pytest.raises(DataQualityError):
        DistanceMatrix.from_full(np.array([[0.0, 1.5], [1.5, 0.0]]))
    # tiny negative rounding noise is clipped, not rejected
    m = DistanceMatrix.from_full(np.array([[0.0, -1e-12], [-1e-12, 0.0]]))
    assert m.get(0, 1) == 0.0


# ---------------------------------------------------------------------------
# PAM
# ---------------------------------------------------------------------------

def test_pam_line_fixture():
    # values {0,1,2,10,11,12}: optimum medoids are values 1 and 11
    m = _line_matrix([0, 1, 2, 10, 11, 12], 12.0)
    c = pam(m, 2)
    assert c.medoids == (1, 4)
    assert c.objective == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert c.converged
    assert list(c.assignment) == [0, 0, 0, 1, 1, 1]


def test_pam_k_one_picks_min_total_distance():
    # both central values tie at total 30/12; the tie goes to the lower index
    m = _line_matrix([0, 1, 2, 10, 11, 12], 12.0)
    c = pam(m, 1)
    assert c.medoids == (2,)
    assert c.objective == pytest.approx(2.5, abs=1e-12)


def test_pam_k_bounds():
    m = _line_matrix([0, 1, 2], 3.0)
    with pytest.raises(ValueError):
        pam(m, 0)
    with pytest.raises(ValueError):
        pam(m, 3)


def _brute_force_objective(full, k):
    n = full.shape[0]
    best = None
    for med in itertools.combinations(range(n), k):
        obj = full[list(med)].min(axis=0).sum()
        if best is None or obj < best - 1e-15:
            best = obj
    return best


def _blob_instance(rng):
    """Small instance whose swap-local optimum provably coincides with the
    global one in practice: k well-separated centers plus tight jitter."""
    k = int(rng.integers(1, 4))
    n = int(rng.integers(max(4, k + 1), 9))
    while True:
        centers = rng.uniform(0, 1, size=(k, 2))
        if k == 1 or min(np.linalg.norm(centers[i] - centers[j])
                         for i in range(k) for j in range(i + 1, k)) > 0.5:
            break
    lab = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    pts = centers[lab] + rng.normal(0, 0.03, size=(n, 2))
    full = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    full /= max(full.max(), 1e-9)
    return DistanceMatrix.from_full(full), k


def test_pam_matches_brute_force_on_separated_instances():
    for trial in range(60):
        rng = np.random.default_rng(1000 + trial)
        m, k = _blob_instance(rng)
        c = pam(m, k)
        assert c.objective == pytest.approx(
            _brute_force_objective(m.full(), k), abs=1e-10), f"trial {trial}"


def test_pam_swap_local_optimum_never_below_global():
    # SWAP is a local search: on unstructured instances it may stop above the
    # global optimum, but at a point no single swap improves
    rng = np.random.default_rng(17)
    n, k = 6, 3
    pts = np.array([rng.uniform(0, 1, size=2) for _ in range(n)])
    full = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    full /= max(full.max(), 1e-9)
    m = DistanceMatrix.from_full(full)
    c = pam(m, k)
    assert c.converged
    assert c.objective >= _brute_force_objective(full, k) - 1e-12
    med = set(c.medoids)
    for mi in range(k):
        for h in set(range(n)) - med:
            cand = list(c.medoids)
            cand[mi] = h
            swapped = full[cand].min(axis=0).sum()
            assert swapped >= c.objective - 1e-12


def test_pam_deterministic():
    rng = np.random.default_rng(23)
    pts = rng.uniform(0, 1, size=(30, 3))
    full = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    m = DistanceMatrix.from_full(full / full.max())
    a, b = pam(m, 4), pam(m, 4)
    assert a.medoids == b.medoids
    assert a.assignment == b.assignment


def test_medoid_anchors_its_own_cluster():
    # point 1 sits exactly between the medoids; argmin alone would put the
    # medoid tie first, but each medoid must stay in its own cluster
    full = np.array([[0.0, 0.5, 1.0],
                     [0.5, 0.0, 0.5],
                     [1.0, 0.5, 0.0]])
    m = DistanceMatrix.from_full(full)
    c = pam(m, 2)
    for ci, medoid in enumerate(c.medoids):
        assert c.assignment[medoid] == ci


# ---------------------------------------------------------------------------
# Silhouette
# ---------------------------------------------------------------------------

def test_silhouette_two_pairs_fixture():
    # exact rational value for the two-pairs line fixture: 38807/39203
    m = _line_matrix([0.0, 0.01, 0.99, 1.0], 1.0)
    c = pam(m, 2)
    assert list(c.assignment) == [0, 0, 1, 1]
    asw, widths = silhouette(m, c)
    assert asw == pytest.approx(38807 / 39203, abs=1e-12)
    assert abs(asw - 0.9899) < 1e-4
    assert widths.shape == (4,)


def test_silhouette_matches_reference_implementation():
    rng = np.random.default_rng(9)
    pts = np.vstack([rng.normal(0, 0.3, size=(12, 2)),
                     rng.normal(3, 0.3, size=(10, 2)),
                     rng.normal((0, 4), 0.3, size=(9, 2))])
    full = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    full /= full.max()
    m = DistanceMatrix.from_full(full)
    c = pam(m, 3)
    asw, _ = silhouette(m, c)
    ref = silhouette_score(m.full(), np.array(c.assignment), metric="precomputed")
    assert asw == pytest.approx(float(ref), abs=1e-10)


def test_silhouette_singleton_scores_zero():
    full = np.array([[0.0, 0.9, 0.95],
                     [0.9, 0.0, 0.1],
                     [0.95, 0.1, 0.0]])
    m = DistanceMatrix.from_full(full)
    c = pam(m, 2)
    _, widths = silhouette(m, c)
    singleton = [ci for ci in range(2) if len(c.members(ci)) == 1][0]
    idx = c.members(singleton)[0]
    assert widths[idx] == 0.0


def test_silhouette_subsample_deterministic():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 1, size=(40, 2))
    full = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    m = DistanceMatrix.from_full(full / full.max())
    c = pam(m, 3)
    a1, _ = silhouette(m, c, sample_size=10, seed=11)
    a2, _ = silhouette(m, c, sample_size=10, seed=11)
    a3, _ = silhouette(m, c, sample_size=10, seed=12)
    assert a1 == a2
    assert a1 != a3 or True  # different seeds may coincide on tiny data


def test_scan_k_planted_two_blobs():
    rng = np.random.default_rng(6)
    pts = np.concatenate([rng.normal(0, 0.05, size=25),
                          rng.normal(1, 0.05, size=25)])
    full = np.abs(np.subtract.outer(pts, pts))
    m = DistanceMatrix.from_full(full / full.max())
    scan = scan_k(m, [2, 3, 4, 5])
    assert scan.best_k == 2
    assert scan.entries[0][1] > 0.8


def test_scan_k_tie_prefers_smaller_k():
    # symmetric 4-point square: k=2 splits are equivalent either way; we only
    # require the documented rule of returning the smallest argmax
    full = np.array([[0.0, 0.1, 1.0, 1.0],
                     [0.1, 0.0, 1.0, 1.0],
                     [1.0, 1.0, 0.0, 0.1],
                     [1.0, 1.0, 0.1, 0.0]])
    m = DistanceMatrix.from_full(full)
    scan = scan_k(m, [2, 3])
    assert scan.best_k == 2
    with pytest.raises(ValueError):
        scan_k(m, [])
    with pytest.raises(ValueError):
        scan_k(m, [1])


# ---------------------------------------------------------------------------
# Filtering and structure summaries
# ---------------------------------------------------------------------------

def test_filter_drops_singleton_with_missing():
    schema = _demo_schema()
    rs = record_set(schema, [
        {"AGE": 30, "RETH": 1, "EDUC": 1, "MARTL": 1, "y": 5.0},
        {"AGE": 31, "RETH": 1, "EDUC": 1, "MARTL": 1, "y": 5.0},
        {"AGE": 80, "RETH": 5, "EDUC": 5, "MARTL": 6, "y": None},  # singleton
    ])
    cfg = GowerConfig.from_records(rs, features=("AGE", "RETH", "EDUC", "MARTL"),
                                   numeric_features=("AGE",))
    m = gower_matrix(rs, cfg)
    c = pam(m, 2)
    kept, audit = filter_clusters(c, rs)
    dropped = [d for d in audit["dropped"]
               if d["reason"] == "singleton_with_missing_field"]
    assert len(dropped) == 1
    assert len(kept) == 1


def test_filter_drops_all_null_variable_cluster():
    schema = _demo_schema()
    rs = record_set(schema, [
        {"AGE": 30, "RETH": 1, "EDUC": 1, "MARTL": 1, "y": 5.0},
        {"AGE": 31, "RETH": 1, "EDUC": 1, "MARTL": 1, "y": 5.0},
        {"AGE": 80, "RETH": 5, "EDUC": None, "MARTL": 6, "y": 5.0},
        {"AGE": 79, "RETH": 5, "EDUC": None, "MARTL": 6, "y": 5.0},
    ])
    cfg = GowerConfig.from_records(rs, features=("AGE", "RETH", "EDUC", "MARTL"),
                                   numeric_features=("AGE",))
    c = pam(gower_matrix(rs, cfg), 2)
    kept, audit = filter_clusters(c, rs)
    reasons = {d["reason"] for d in audit["dropped"]}
    assert reasons == {"all_null_variable"}
    assert audit["records_dropped"] == 2
    assert len(kept) == 1


def test_pca_contribution_finds_planted_axis():
    rng = np.random.default_rng(8)
    schema = schema_of(continuous("v1", -100, 100), continuous("v2", -100, 100),
                       continuous("v3", -100, 100))
    t = rng.normal(size=60)
    rows = [{"v1": float(x), "v2": float(2 * x + rng.normal(0, 0.01)),
             "v3": float(rng.normal(0, 0.01)), "y": 5.0} for x in t]
    rs = record_set(schema, rows)
    cfg = GowerConfig(features=("v1", "v2", "v3"),
                      ranges={"v1": 1.0, "v2": 1.0, "v3": 1.0},
                      numeric_features=frozenset({"v1", "v2", "v3"}))
    pca = pca_contribution(rs, cfg)
    assert pca.labels == ("v1", "v2", "v3")
    assert pca.explained_variance_ratio[0] > 0.6
    assert pca.explained_variance_ratio[0] >= pca.explained_variance_ratio[1]
    # the planted axis loads on v1 and v2, not the noise column
    lead = pca.loadings[:, 0]
    assert lead[2] < 0.2 * max(lead[0], lead[1])
