"""Synthetic raw-survey fixture generator.

Produces the five raw family tables the ingest stage consumes, sized for
desk-scale pipeline runs.  The population is generated from an explicit
recipe so every downstream quantity has a computable oracle:

* Cluster structure is planted through demographic prototypes.  Each cluster
  fixes gender, ethnicity, residence, education, marital status, and an
  income band, and centers age on a cluster-specific value; prototypes are
  rejection-sampled to differ from each other in at least three of the seven
  demographic features, so between-cluster Gower distance is bounded below
  while within-cluster distance stays near zero.
* Fasting glucose follows a documented additive response in the derived
  state/action features (GLUCOSE_RESPONSE below) plus a per-cluster shift
  and Gaussian noise.
* Raw columns are then de-derived from the intended values: two dietary
  recall days that average back to the target, four blood-pressure readings
  whose second and third average to the target, item-level depression
  answers summing to the target score, and so on.
* Missingness is injected per optional cell at a configurable rate, plus a
  sprinkle of refused/don't-know codes on the alcohol item; a rate of zero
  yields fully complete files.

The planted cluster label of every participant is written alongside the raw
tables, and the full recipe (parameters, prototypes, response constants)
goes to a JSON file, so tests can score recovered clusterings and fitted
response models against ground truth.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

# Additive fasting-glucose response over derived features.  Continuous terms
# are slope * (value - center); the activity term uses moderate + 2*vigorous
# minutes.  The cluster shift spreads linearly over [-amplitude, amplitude].
GLUCOSE_RESPONSE = {
    "base": 5.6,
    "kcal": (2000.0, 0.0009),
    "sugar": (110.0, 0.006),
    "fiber": (15.0, -0.0333),
    "smoking": (0.0, 0.000667),
    "alcohol": (0.0, 0.05),
    "activity": (0.0, -0.00075),
    "depression": 0.5,
    "sleep_disorder": 0.3,
    "age": (45.0, 0.01),
    "cluster_amplitude": 0.6,
    "noise_sd": 0.3,
    "clip": (2.5, 30.0),
}

AGE_CENTERS = (22, 30, 38, 46, 54, 62, 70, 78)
PROTOTYPE_MIN_DIFFERENCES = 3

DEMOGRAPHIC_COLUMNS = ("RIAGENDR", "RIDAGEYR", "RIDRETH1", "DMDYRSUS",
                       "DMDEDUC2", "DMDMARTL", "INDFMPIR")
EXAMINATION_COLUMNS = ("BMXBMI", "BPXSY1", "BPXDI1", "BPXSY2", "BPXDI2",
                       "BPXSY3", "BPXDI3", "BPXSY4", "BPXDI4")
NUTRIENTS = ("KCAL", "PROT", "CARB", "FIBE", "TFAT", "CHOL", "SUGR")
DIETARY_COLUMNS = tuple(f"DR{d}T{n}" for d in (1, 2) for n in NUTRIENTS)
LABORATORY_COLUMNS = ("LBXGLUSI", "LBXGLTSI", "LBXIN", "LBXHSCRP", "LBXGH")
QUESTIONNAIRE_COLUMNS = (
    "ALQ130", "SMD641", "SMD650",
    "DPQ010", "DPQ020", "DPQ030", "DPQ040", "DPQ050", "DPQ060", "DPQ070",
    "DPQ080", "DPQ090",
    "SLD012", "SLD013", "SLQ050", "SLQ060", "SLQ120",
    "PAQ_REC_MOD", "PAQ_REC_VIG", "PAQ_WORK_MOD", "PAQ_WORK_VIG",
    "PAQ_HOME_MOD", "PAQ_HOME_VIG")

# Never blanked by missingness injection: identity plus the two demographic
# anchors that real surveys essentially always have.
PROTECTED_COLUMNS = frozenset({"SEQN", "cycle", "RIAGENDR", "RIDAGEYR"})


@dataclass(frozen=True)
class FixtureSpec:
    n: int = 400
    clusters: int = 4
    seed: int = 0
    missing_rate: float = 0.05
    cycles: tuple[str, ...] = ("2017-2018",)

    def __post_init__(self):
        if self.clusters < 1:
            raise ConfigError(f"clusters must be >= 1, got {self.clusters}")
        if self.n < 2 * self.clusters:
            raise ConfigError(
                f"need at least 2 records per cluster: n={self.n}, "
                f"clusters={self.clusters}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError(
                f"missing rate must lie in [0, 1), got {self.missing_rate}")
        if not self.cycles:
            raise ConfigError("at least one survey cycle is required")


@dataclass(frozen=True)
class FixtureManifest:
    spec: FixtureSpec
    paths: dict[str, Path]
    labels: dict[str, int]          # SEQN -> planted cluster
    prototypes: tuple[dict, ...]


def _sample_prototypes(rng: np.random.Generator, k: int) -> list[dict]:
    """Distinct demographic prototypes, pairwise different in at least
    PROTOTYPE_MIN_DIFFERENCES of the seven clustering features."""

    def draw() -> dict:
        return {"gender": int(rng.integers(1, 3)),
                "age_center": int(AGE_CENTERS[rng.integers(len(AGE_CENTERS))]),
                "reth": int(rng.integers(1, 6)),
                "yrsus": int(rng.integers(1, 10)),
                "educ": int(rng.integers(1, 6)),
                "martl": int(rng.integers(1, 7)),
                "pir_band": int(rng.integers(0, 6))}

    def differences(a: dict, b: dict) -> int:
        d = sum(a[f] != b[f] for f in ("gender", "reth", "yrsus", "educ",
                                       "martl", "pir_band"))
        d += abs(a["age_center"] - b["age_center"]) >= 16
        return d

    protos: list[dict] = []
    attempts = 0
    while len(protos) < k:
        cand = draw()
        attempts += 1
        if attempts > 10000:
            raise ConfigError(
                f"could not plant {k} distinct prototypes; lower the cluster count")
        if all(differences(cand, p) >= PROTOTYPE_MIN_DIFFERENCES for p in protos):
            protos.append(cand)
    return protos


def _cluster_shift(cluster: int, k: int) -> float:
    amp = GLUCOSE_RESPONSE["cluster_amplitude"]
    if k == 1:
        return 0.0
    return amp * (2.0 * cluster / (k - 1) - 1.0)


def planted_glucose(derived: dict, cluster: int, k: int, noise: float) -> float:
    """The generative response: documented oracle for the fitted model."""
    r = GLUCOSE_RESPONSE
    g = r["base"]
    for key, feat in (("kcal", "KCAL"), ("sugar", "SUGR"), ("fiber", "FIBE")):
        center, slope = r[key]
        g += slope * (derived[feat] - center)
    g += r["smoking"][1] * derived["SMD"]
    g += r["alcohol"][1] * derived["ALQ"]
    g += r["activity"][1] * (derived["PAQ_MODERATE"] + 2.0 * derived["PAQ_VIGOROUS"])
    g += r["depression"] * derived["CIQ"]
    g += r["sleep_disorder"] * derived["SLQ050"]
    center, slope = r["age"]
    g += slope * (derived["RIDAGEYR"] - center)
    g += _cluster_shift(cluster, k)
    g += noise
    lo, hi = r["clip"]
    return float(min(max(g, lo), hi))


def _phq9_items(rng: np.random.Generator, total: int) -> list[int]:
    items = [0] * 9
    while sum(items) < total:
        i = int(rng.integers(9))
        if items[i] < 3:
            items[i] += 1
    return items


def _round(x: float, digits: int = 1) -> str:
    return f"{x:.{digits}f}"


def _generate_record(rng: np.random.Generator, proto: dict, cluster: int,
                     k: int) -> tuple[dict[str, str], dict]:
    """One participant: raw cells (strings) plus the derived truth."""
    raw: dict[str, str] = {}
    derived: dict = {}

    age = int(np.clip(proto["age_center"] + rng.integers(-3, 4), 18, 80))
    pir_raw = proto["pir_band"] + float(rng.uniform(0.0, 0.99))
    raw["RIAGENDR"] = str(proto["gender"])
    raw["RIDAGEYR"] = str(age)
    raw["RIDRETH1"] = str(proto["reth"])
    raw["DMDYRSUS"] = str(proto["yrsus"])
    raw["DMDEDUC2"] = str(proto["educ"])
    raw["DMDMARTL"] = str(proto["martl"])
    raw["INDFMPIR"] = _round(pir_raw, 2)
    derived["RIDAGEYR"] = age

    bmi = float(np.clip(24.0 + 2.5 * (cluster % 5) + rng.normal(0, 2.0), 15, 60))
    sys = float(np.clip(112.0 + 4.0 * (cluster % 4) + rng.normal(0, 8.0), 85, 200))
    dia = float(np.clip(0.55 * sys + rng.normal(0, 5.0), 45, 120))
    raw["BMXBMI"] = _round(bmi)
    half = float(rng.normal(0, 2.0))
    raw["BPXSY1"] = _round(sys + rng.normal(0, 4.0), 0)
    raw["BPXSY2"], raw["BPXSY3"] = _round(sys + half, 0), _round(sys - half, 0)
    half_d = float(rng.normal(0, 1.5))
    raw["BPXDI1"] = _round(dia + rng.normal(0, 3.0), 0)
    raw["BPXDI2"], raw["BPXDI3"] = _round(dia + half_d, 0), _round(dia - half_d, 0)
    # the fourth reading is structurally sparse in real collections
    if rng.random() < 0.4:
        raw["BPXSY4"], raw["BPXDI4"] = _round(sys + rng.normal(0, 4.0), 0), \
            _round(dia + rng.normal(0, 3.0), 0)
    else:
        raw["BPXSY4"] = raw["BPXDI4"] = ""

    diet_target = {
        "KCAL": float(np.clip(rng.normal(2000, 450), 600, 6000)),
        "PROT": float(np.clip(rng.normal(80, 20), 10, 300)),
        "CARB": float(np.clip(rng.normal(250, 60), 40, 900)),
        "FIBE": float(np.clip(rng.normal(15, 6), 0, 120)),
        "TFAT": float(np.clip(rng.normal(80, 25), 10, 350)),
        "CHOL": float(np.clip(rng.normal(300, 90), 20, 2000)),
        "SUGR": float(np.clip(rng.normal(110, 40), 5, 600)),
    }
    for nutrient, target in diet_target.items():
        delta = float(rng.normal(0, 0.06 * target + 1.0))
        delta = min(delta, target)  # keep both days non-negative
        raw[f"DR1T{nutrient}"] = _round(target + delta)
        raw[f"DR2T{nutrient}"] = _round(target - delta)
        derived[nutrient] = (float(raw[f"DR1T{nutrient}"])
                             + float(raw[f"DR2T{nutrient}"])) / 2.0

    heavy = rng.random() < 0.01
    alq = int(rng.integers(20, 41)) if heavy else int(min(rng.poisson(1.2), 14))
    raw["ALQ130"] = str(alq)
    derived["ALQ"] = float(min(alq, 15))

    if rng.random() < 0.7:
        days = cigs = 0
    else:
        days = int(rng.integers(1, 31))
        cigs = int(rng.integers(100, 140)) if rng.random() < 0.005 \
            else int(rng.integers(1, 31))
    raw["SMD641"], raw["SMD650"] = str(days), str(cigs)
    derived["SMD"] = float(days * min(cigs, 95))

    depressed = rng.random() < (0.25 if cluster % 3 == 0 else 0.10)
    total = int(rng.integers(10, 21)) if depressed else int(rng.integers(0, 10))
    for col, item in zip(QUESTIONNAIRE_COLUMNS[3:12], _phq9_items(rng, total)):
        raw[col] = str(item)
    derived["CIQ"] = int(total >= 10)

    sleep_flag = int(rng.random() < 0.25)
    raw["SLD012"] = _round(float(np.clip(rng.normal(7.2, 1.0), 3, 12)))
    raw["SLD013"] = _round(float(np.clip(rng.normal(8.0, 1.2), 3, 12)))
    raw["SLQ050"] = str(sleep_flag)
    raw["SLQ060"] = str(int(rng.random() < 0.15))
    raw["SLQ120"] = str(int(rng.integers(0, 5)))
    derived["SLQ050"] = sleep_flag

    moderate = float(np.clip(rng.exponential(120.0), 0, 1200))
    vigorous = float(np.clip(rng.exponential(60.0), 0, 900))
    raw["PAQ_REC_MOD"], raw["PAQ_REC_VIG"] = _round(moderate), _round(vigorous)
    raw["PAQ_WORK_MOD"] = _round(float(rng.exponential(90.0)))
    raw["PAQ_WORK_VIG"] = _round(float(rng.exponential(45.0)))
    raw["PAQ_HOME_MOD"] = _round(float(rng.exponential(60.0)))
    raw["PAQ_HOME_VIG"] = _round(float(rng.exponential(30.0)))
    derived["PAQ_MODERATE"], derived["PAQ_VIGOROUS"] = \
        float(raw["PAQ_REC_MOD"]), float(raw["PAQ_REC_VIG"])

    k_count = max(k, 1)
    glucose = planted_glucose(derived, cluster, k_count,
                              float(rng.normal(0, GLUCOSE_RESPONSE["noise_sd"])))
    raw["LBXGLUSI"] = _round(glucose, 2)
    raw["LBXGLTSI"] = _round(float(np.clip(glucose * 1.4 + rng.normal(0, 1.0),
                                           1.5, 34.0)), 2)
    raw["LBXIN"] = _round(float(np.clip(rng.lognormal(2.4, 0.5), 2, 60)))
    raw["LBXHSCRP"] = _round(float(np.clip(rng.lognormal(0.4, 0.9), 0.03, 40)), 2)
    raw["LBXGH"] = _round(float(np.clip(5.4 + 0.25 * (glucose - 5.5)
                                        + rng.normal(0, 0.25), 3.5, 15.0)), 1)
    return raw, derived


def _inject_missing(rng: np.random.Generator, tables: dict[str, list[dict]],
                    rate: float) -> None:
    if rate <= 0.0:
        return
    for rows in tables.values():
        for row in rows:
            for col in row:
                if col in PROTECTED_COLUMNS or row[col] == "":
                    continue
                u = rng.random()
                if u < rate:
                    # occasionally a survey missing code instead of a blank
                    row[col] = "." if u < rate * 0.2 else ""
                elif col == "ALQ130" and u < rate * 1.3:
                    row[col] = "99"


def generate_fixture(out_dir: str | Path, spec: FixtureSpec) -> FixtureManifest:
    """Write the five raw tables plus labels and recipe into `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    prototypes = _sample_prototypes(rng, spec.clusters)

    tables: dict[str, list[dict]] = {
        "demographics": [], "examination": [], "dietary": [],
        "laboratory": [], "questionnaire": []}
    columns = {"demographics": DEMOGRAPHIC_COLUMNS,
               "examination": EXAMINATION_COLUMNS,
               "dietary": DIETARY_COLUMNS,
               "laboratory": LABORATORY_COLUMNS,
               "questionnaire": QUESTIONNAIRE_COLUMNS}
    labels: dict[str, int] = {}

    for i in range(spec.n):
        seqn = str(100001 + i)
        cycle = spec.cycles[i % len(spec.cycles)]
        cluster = i % spec.clusters
        raw, _ = _generate_record(rng, prototypes[cluster], cluster, spec.clusters)
        labels[seqn] = cluster
        for table, cols in columns.items():
            row = {"SEQN": seqn, "cycle": cycle}
            row.update({c: raw.get(c, "") for c in cols})
            tables[table].append(row)

    _inject_missing(rng, tables, spec.missing_rate)

    paths: dict[str, Path] = {}
    for table, cols in columns.items():
        path = out / f"{table}.csv"
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=["SEQN", "cycle", *cols],
                               lineterminator="\n")
            w.writeheader()
            w.writerows(tables[table])
        paths[table] = path

    labels_path = out / "planted_labels.csv"
    with open(labels_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["SEQN", "cluster"])
        for seqn in sorted(labels, key=int):
            w.writerow([seqn, labels[seqn]])
    paths["planted_labels"] = labels_path

    recipe = {"n": spec.n, "clusters": spec.clusters, "seed": spec.seed,
              "missing_rate": spec.missing_rate, "cycles": list(spec.cycles),
              "glucose_response": {k: list(v) if isinstance(v, tuple) else v
                                   for k, v in GLUCOSE_RESPONSE.items()},
              "prototypes": prototypes}
    recipe_path = out / "generator_recipe.json"
    recipe_path.write_text(json.dumps(recipe, indent=2))
    paths["recipe"] = recipe_path
    return FixtureManifest(spec, paths, labels, tuple(prototypes))


def read_planted_labels(path: str | Path) -> dict[str, int]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return {row["SEQN"]: int(row["cluster"]) for row in reader}
