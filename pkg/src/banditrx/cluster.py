"""Mixed-type dissimilarity, k-medoids clustering, and silhouette validation.

Dissimilarity is the Gower coefficient: a weighted mean of per-feature
terms, |x - y| / R_s for numeric features and a mismatch indicator for
categorical ones. A feature missing in either record drops out of both
numerator and denominator, which keeps the result in [0, 1]. Per-feature
ranges R_s are frozen into the config once, so distances stay stable when
the record set is subset later.

Clustering is classic PAM: a greedy BUILD phase then best-swap-per-pass
SWAP, fully deterministic with ties broken by lowest point index.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Record, RecordSet
from .errors import ConfigError, DataQualityError

log = logging.getLogger(__name__)

# The seven demographic clustering features.
DEFAULT_GOWER_FEATURES = ("RIAGENDR", "RIDAGEYR", "RIDRETH1", "DMDMARTL",
                          "DMDYRSUS", "DMDEDUC2", "INDFMPIR")
# Age and income ratio carry ordinal magnitude, so they take the numeric
# |x-y|/R term; the other demographics are matched as categories.
DEFAULT_NUMERIC_FEATURES = frozenset({"RIDAGEYR", "INDFMPIR"})

SWAP_ITERATION_CAP = 200


@dataclass(frozen=True)
class GowerConfig:
    """Feature subset, weights, and frozen numeric ranges for Gower distances."""

    features: tuple[str, ...] = DEFAULT_GOWER_FEATURES
    weights: Mapping[str, float] = field(default_factory=dict)
    ranges: Mapping[str, float] = field(default_factory=dict)
    numeric_features: frozenset[str] = DEFAULT_NUMERIC_FEATURES

    def __post_init__(self):
        if not self.features:
            raise ConfigError("Gower config needs at least one feature")
        if all(self.weight(f) == 0.0 for f in self.features):
            raise ConfigError("Gower config needs at least one positive weight")
        for f in self.features:
            if self.weight(f) < 0:
                raise ConfigError(f"negative Gower weight for {f!r}")
            if f in self.numeric_features:
                r = self.ranges.get(f)
                if r is None or r <= 0:
                    raise ConfigError(f"numeric feature {f!r} needs a positive range R_s")

    def weight(self, name: str) -> float:
        return float(self.weights.get(name, 1.0))

    @classmethod
    def from_records(cls, records: RecordSet,
                     features: Sequence[str] = DEFAULT_GOWER_FEATURES,
                     numeric_features: Iterable[str] = DEFAULT_NUMERIC_FEATURES,
                     weights: Mapping[str, float] | None = None) -> "GowerConfig":
        """Freeze observed ranges from the data. A constant numeric feature
        gets R_s = 1; its |x-y| term is always 0 so the value is arbitrary."""
        numeric = frozenset(numeric_features)
        ranges = {}
        for name in features:
            if name not in numeric:
                continue
            vals = [float(r.values[name]) for r in records.records
                    if r.values.get(name) is not None]
            if not vals:
                raise DataQualityError(f"feature {name!r} has no observed values to range")
            span = max(vals) - min(vals)
            ranges[name] = span if span > 0 else 1.0
        return cls(tuple(features), dict(weights or {}), ranges, numeric)

    def to_dict(self) -> dict:
        return {"features": list(self.features), "weights": dict(self.weights),
                "ranges": dict(self.ranges),
                "numeric_features": sorted(self.numeric_features)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GowerConfig":
        return cls(tuple(d["features"]), dict(d.get("weights", {})),
                   {k: float(v) for k, v in d.get("ranges", {}).items()},
                   frozenset(d.get("numeric_features", DEFAULT_NUMERIC_FEATURES)))


def _condensed_size(n: int) -> int:
    return n * (n - 1) // 2


def _condensed_index(n: int, i: int, j: int) -> int:
    # i < j required
    return n * i - (i * (i + 1)) // 2 + (j - i - 1)


@dataclass(frozen=True)
class DistanceMatrix:
    """Condensed upper-triangular pairwise dissimilarities in [0, 1]."""

    n: int
    condensed: np.ndarray

    MAGIC = b"BRXD"
    VERSION = 1

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"distance matrix needs n >= 2, got {self.n}")
        expected = _condensed_size(self.n)
        if self.condensed.shape != (expected,):
            raise ConfigError(
                f"condensed storage for n={self.n} must have {expected} entries, "
                f"got {self.condensed.shape}")
        if not np.all(np.isfinite(self.condensed)):
            raise DataQualityError("distance matrix contains non-finite entries")
        lo, hi = float(self.condensed.min(initial=0.0)), float(self.condensed.max(initial=0.0))
        if lo < -1e-9 or hi > 1 + 1e-9:
            raise DataQualityError(f"distance entries outside [0,1]: min {lo}, max {hi}")
        object.__setattr__(self, "condensed",
                           np.clip(np.asarray(self.condensed, dtype=np.float64), 0.0, 1.0))
        self.condensed.setflags(write=False)

    @classmethod
    def from_full(cls, full: np.ndarray) -> "DistanceMatrix":
        full = np.asarray(full, dtype=np.float64)
        n = full.shape[0]
        iu = np.triu_indices(n, 1)
        return cls(n, full[iu])

    def get(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        if i > j:
            i, j = j, i
        return float(self.condensed[_condensed_index(self.n, i, j)])

    def full(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n, 1)
        out[iu] = self.condensed
        out.T[iu] = self.condensed
        return out

    def save(self, path: str | Path) -> None:
        payload = np.ascontiguousarray(self.condensed, dtype="<f8").tobytes()
        header = self.MAGIC + struct.pack("<IQI", self.VERSION, self.n,
                                          zlib.crc32(payload) & 0xFFFFFFFF)
        Path(path).write_bytes(header + payload)

    @classmethod
    def load(cls, path: str | Path) -> "DistanceMatrix":
        raw = Path(path).read_bytes()
        if len(raw) < 20 or raw[:4] != cls.MAGIC:
            raise ConfigError(f"{path}: not a distance-matrix cache file")
        version, n, crc = struct.unpack("<IQI", raw[4:20])
        if version != cls.VERSION:
            raise ConfigError(f"{path}: unsupported cache version {version}")
        payload = raw[20:]
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise DataQualityError(f"{path}: checksum mismatch, cache is corrupt")
        condensed = np.frombuffer(payload, dtype="<f8").astype(np.float64)
        return cls(int(n), condensed)


def _encode_for_gower(records: Sequence[Record], cfg: GowerConfig):
    """Numeric matrix with NaN missing, plus per-feature masks/weights/ranges."""
    p = len(cfg.features)
    x = np.full((len(records), p), np.nan)
    for ri, rec in enumerate(records):
        for fi, name in enumerate(cfg.features):
            v = rec.values.get(name)
            if v is not None:
                x[ri, fi] = float(v)
    numeric = np.array([f in cfg.numeric_features for f in cfg.features])
    weights = np.array([cfg.weight(f) for f in cfg.features])
    ranges = np.array([cfg.ranges.get(f, 1.0) if f in cfg.numeric_features else 1.0
                       for f in cfg.features])
    return x, numeric, weights, ranges


def _pair_from_rows(xi: np.ndarray, xj: np.ndarray, numeric, weights, ranges) -> float:
    valid = ~np.isnan(xi) & ~np.isnan(xj)
    w = weights * valid
    den = w.sum()
    if den == 0:
        raise DataQualityError("undefined Gower distance: no jointly observed weighted feature")
    delta = np.where(numeric,
                     np.minimum(np.abs(np.where(valid, xi, 0.0) - np.where(valid, xj, 0.0))
                                / ranges, 1.0),
                     (np.where(valid, xi, 0.0) != np.where(valid, xj, 0.0)).astype(float))
    return float((w * delta).sum() / den)


def gower_pair(a: Record, b: Record, cfg: GowerConfig) -> float:
    """Dissimilarity between two records in [0, 1]."""
    x, numeric, weights, ranges = _encode_for_gower([a, b], cfg)
    return _pair_from_rows(x[0], x[1], numeric, weights, ranges)


def gower_matrix(records: RecordSet, cfg: GowerConfig, block: int = 512) -> DistanceMatrix:
    """All-pairs condensed Gower matrix, computed in row blocks so memory
    stays O(block x n) regardless of n."""
    recs = records.records
    n = len(recs)
    if n < 2:
        raise DataQualityError(f"need at least 2 records to build a distance matrix, got {n}")
    x, numeric, weights, ranges = _encode_for_gower(recs, cfg)
    present = ~np.isnan(x)
    xz = np.where(present, x, 0.0)

    out = np.empty(_condensed_size(n))
    pos = 0
    for start in range(0, n - 1, block):
        stop = min(start + block, n - 1)
        for i in range(start, stop):
            xi, pi = xz[i], present[i]
            valid = pi[None, :] & present[i + 1:]          # (m, p)
            w = weights[None, :] * valid
            den = w.sum(axis=1)
            diff = np.abs(xi[None, :] - xz[i + 1:])
            delta = np.where(numeric[None, :],
                             np.minimum(diff / ranges[None, :], 1.0),
                             (xi[None, :] != xz[i + 1:]).astype(float))
            bad = den == 0
            if bad.any():
                j = int(np.flatnonzero(bad)[0]) + i + 1
                raise DataQualityError(
                    f"undefined Gower distance for pair ({i}, {j}): "
                    "no jointly observed weighted feature")
            row = (w * delta).sum(axis=1) / den
            out[pos:pos + row.size] = row
            pos += row.size
    return DistanceMatrix(n, out)


# ---------------------------------------------------------------------------
# PAM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Clustering:
    k: int
    medoids: tuple[int, ...]        # ascending point indices
    assignment: tuple[int, ...]     # per-point cluster id = position in medoids
    objective: float                # sum of point-to-medoid dissimilarities
    swap_iterations: int = 0
    converged: bool = True

    def members(self, cluster_id: int) -> list[int]:
        return [i for i, c in enumerate(self.assignment) if c == cluster_id]

    def to_dict(self) -> dict:
        return {"k": self.k, "medoids": list(self.medoids),
                "assignment": list(self.assignment), "objective": self.objective,
                "swap_iterations": self.swap_iterations, "converged": self.converged}


def _assign(d_full: np.ndarray, medoids: Sequence[int]) -> tuple[np.ndarray, float]:
    dm = d_full[list(medoids)]                      # (k, n)
    assignment = np.argmin(dm, axis=0)              # first occurrence = lowest medoid
    for ci, m in enumerate(medoids):
        assignment[m] = ci                          # a medoid anchors its own cluster
    objective = float(dm[assignment, np.arange(d_full.shape[0])].sum())
    return assignment, objective


def pam(matrix: DistanceMatrix, k: int, seed: int = 0) -> Clustering:
    """k-medoids: greedy BUILD then best-swap SWAP passes.

    Deterministic: BUILD and SWAP break ties by lowest point index, so the
    seed never influences the result; it is accepted for interface parity
    with the sampled operations.
    """
    del seed
    n = matrix.n
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n={n}, got {k}")
    d = matrix.full()

    # BUILD: start from the point with minimal total distance, then greedily
    # add whichever point lowers the objective most.
    medoids = [int(np.argmin(d.sum(axis=1)))]
    nearest = d[medoids[0]].copy()
    while len(medoids) < k:
        cand_obj = np.minimum(nearest[None, :], d).sum(axis=1)
        cand_obj[medoids] = np.inf
        c = int(np.argmin(cand_obj))
        medoids.append(c)
        nearest = np.minimum(nearest, d[c])

    # SWAP: per pass, evaluate every (medoid, non-medoid) exchange and take
    # the best strict improvement; stop when none exists.
    iterations = 0
    converged = True
    idx = np.arange(n)
    for iterations in range(1, SWAP_ITERATION_CAP + 1):
        med = sorted(medoids)
        dm = d[med]                                      # (k, n)
        order = np.argsort(dm, axis=0, kind="stable")
        nearest1 = dm[order[0], idx]
        nearest_pos = order[0]
        second = dm[order[1], idx] if k > 1 else np.full(n, np.inf)
        current = float(nearest1.sum())

        non_med = np.setdiff1d(idx, med, assume_unique=False)
        best = (current, None)
        for mi, m in enumerate(med):
            base = np.where(nearest_pos == mi, second, nearest1)
            new_obj = np.minimum(base[None, :], d[non_med]).sum(axis=1)
            bi = int(np.argmin(new_obj))
            if new_obj[bi] < best[0] - 1e-15:
                best = (float(new_obj[bi]), (mi, int(non_med[bi])))
        if best[1] is None:
            break
        mi, h = best[1]
        medoids = med[:mi] + [h] + med[mi + 1:]
    else:
        converged = False
        log.warning("pam: SWAP hit the %d-iteration cap without converging", SWAP_ITERATION_CAP)

    med = tuple(sorted(medoids))
    assignment, objective = _assign(d, med)
    return Clustering(k, med, tuple(int(a) for a in assignment), objective,
                      swap_iterations=iterations, converged=converged)


# ---------------------------------------------------------------------------
# Silhouette
# ---------------------------------------------------------------------------

def silhouette(matrix: DistanceMatrix, clustering: Clustering,
               sample_size: int | None = None, seed: int = 0) -> tuple[float, np.ndarray]:
    """Average silhouette width and per-point widths.

    s = (b - a) / max(a, b); a is the mean distance to the point's own
    cluster (self excluded), b the smallest mean distance to another
    cluster. Singletons and the degenerate a = b = 0 case score 0.

    ``sample_size`` caps the number of members used to estimate each
    cluster mean (seeded subsample per cluster) for very large n; the exact
    computation is used whenever it is None.
    """
    if clustering.k < 2:
        raise ValueError("silhouette is undefined for a single cluster")
    n = matrix.n
    labels = np.asarray(clustering.assignment)
    d = matrix.full()

    rng = np.random.default_rng(seed)
    cluster_members: list[np.ndarray] = []
    for c in range(clustering.k):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            raise DataQualityError(f"cluster {c} is empty")
        if sample_size is not None and members.size > sample_size:
            members = np.sort(rng.choice(members, size=sample_size, replace=False))
        cluster_members.append(members)

    counts = np.bincount(labels, minlength=clustering.k)
    sums = np.stack([d[:, m].sum(axis=1) for m in cluster_members], axis=1)  # (n, k)
    used = np.array([m.size for m in cluster_members], dtype=float)

    own = sums[np.arange(n), labels]
    # when this point itself was in the subsample, its zero self-distance is in the sum
    in_sample = np.array([i in set(cluster_members[labels[i]].tolist()) for i in range(n)]) \
        if sample_size is not None else np.ones(n, dtype=bool)
    own_count = used[labels] - in_sample.astype(float)
    a = np.where(own_count > 0, own / np.maximum(own_count, 1.0), 0.0)

    other = sums / used[None, :]
    other[np.arange(n), labels] = np.inf
    b = other.min(axis=1)

    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s = np.where(counts[labels] <= 1, 0.0, s)
    return float(s.mean()), s


@dataclass(frozen=True)
class ScanResult:
    entries: tuple[tuple[int, float], ...]   # (k, ASW) in grid order
    best_k: int

    def to_dict(self) -> dict:
        return {"entries": [{"k": k, "asw": a} for k, a in self.entries],
                "best_k": self.best_k}


def scan_k(matrix: DistanceMatrix, grid: Sequence[int], seed: int = 0) -> ScanResult:
    """PAM + silhouette per k; best k maximizes ASW, ties to the smallest k."""
    ks = list(grid)
    if not ks:
        raise ValueError("scan_k needs a non-empty k grid")
    for k in ks:
        if not 2 <= k <= matrix.n - 1:
            raise ValueError(f"grid value {k} outside [2, {matrix.n - 1}]")
    entries = []
    for k in ks:
        clustering = pam(matrix, k, seed=seed)
        asw, _ = silhouette(matrix, clustering)
        entries.append((k, asw))
    best_k = min(entries, key=lambda e: (-e[1], e[0]))[0]
    return ScanResult(tuple(entries), best_k)


# ---------------------------------------------------------------------------
# Cluster validity filtering
# ---------------------------------------------------------------------------

def filter_clusters(clustering: Clustering, records: RecordSet) -> tuple[list[int], dict]:
    """Drop singleton clusters holding a record with any missing feature and
    clusters where some variable is null across every member. Returns kept
    cluster ids plus an audit of drops."""
    feature_names = [f.name for f in records.schema.features]
    kept: list[int] = []
    dropped: list[dict] = []
    records_dropped = 0
    for c in range(clustering.k):
        members = clustering.members(c)
        recs = [records.records[i] for i in members]
        if len(recs) == 1 and any(recs[0].values.get(f) is None for f in feature_names):
            dropped.append({"cluster": c, "reason": "singleton_with_missing_field"})
            records_dropped += 1
            continue
        all_null = [f for f in feature_names
                    if all(r.values.get(f) is None for r in recs)]
        if all_null:
            dropped.append({"cluster": c, "reason": "all_null_variable",
                            "variables": all_null})
            records_dropped += len(recs)
            continue
        kept.append(c)
    audit = {"clusters_in": clustering.k, "clusters_kept": len(kept),
             "clusters_dropped": len(dropped), "records_dropped": records_dropped,
             "dropped": dropped}
    return kept, audit


# ---------------------------------------------------------------------------
# PCA contribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PcaContribution:
    labels: tuple[str, ...]
    explained_variance_ratio: tuple[float, float]
    loadings: np.ndarray  # (p, 2) absolute loadings


def pca_contribution(records: RecordSet, cfg: GowerConfig) -> PcaContribution:
    """Absolute loadings of each encoded feature on the top two principal
    components. Categoricals are one-hot over schema levels, numerics are
    z-scored; missing cells take the column mean before decomposition."""
    recs = records.records
    if len(recs) < 2:
        raise ValueError(f"PCA needs at least 2 records, got {len(recs)}")
    columns: list[np.ndarray] = []
    labels: list[str] = []
    for name in cfg.features:
        feat = records.schema.feature(name)
        raw = np.array([np.nan if r.values.get(name) is None else float(r.values[name])
                        for r in recs])
        if name in cfg.numeric_features or feat.kind.is_continuous:
            columns.append(raw)
            labels.append(name)
        elif feat.kind.is_binary:
            columns.append(raw)
            labels.append(name)
        else:
            for level in feat.kind.levels:
                columns.append(np.where(np.isnan(raw), np.nan, (raw == level).astype(float)))
                labels.append(f"{name}={level}")
    x = np.stack(columns, axis=1)
    col_mean = np.nanmean(x, axis=0)
    x = np.where(np.isnan(x), col_mean[None, :], x)
    std = x.std(axis=0, ddof=0)
    z = (x - x.mean(axis=0)) / np.where(std > 0, std, 1.0)

    cov = np.cov(z, rowvar=False)
    cov = np.atleast_2d(cov)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    total = float(eigvals.sum())
    top = min(2, eigvals.size)
    ratios = [float(eigvals[i] / total) if total > 0 else 0.0 for i in range(top)]
    while len(ratios) < 2:
        ratios.append(0.0)
    loadings = np.abs(eigvecs[:, :top])
    if top < 2:
        loadings = np.hstack([loadings, np.zeros((loadings.shape[0], 2 - top))])
    return PcaContribution(tuple(labels), (ratios[0], ratios[1]), loadings)
