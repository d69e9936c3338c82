"""Survey CSV parsing and preprocessing derivations.

Turns raw per-family survey tables (demographics, examination, dietary,
laboratory, questionnaire) into one clean canonical RecordSet. Every
derivation here is a pure function; the pipeline wires them together and
counts every dropped, capped, or converted value into an audit record.

Refusal / don't-know codes become missing fields. Laboratory values
measured on different assay instruments are aligned to one reference
instrument through configurable piecewise-affine harmonization maps
keyed by (assay, cycle); the regression coefficients are config inputs
with identity defaults.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from scipy.special import stdtr

from .core import FeatureSchema, Record, RecordSet, Value, validate_record
from .errors import ConfigError, DataQualityError, NumericError

# Caps and thresholds from the published preprocessing rules.
ALCOHOL_CAP_CUPS = 15.0
CIGARETTES_PER_DAY_CAP = 95
PHQ9_CUTOFF = 10
HBA1C_PREDIABETES = 5.7
HBA1C_DIABETES = 6.5
HYPERTENSION_SYSTOLIC = 130.0
HYPERTENSION_DIASTOLIC = 80.0

DEFAULT_MISSING_CODES = frozenset({"", ".", "dont know", "don't know", "refused", "7777", "9999"})


# ---------------------------------------------------------------------------
# Harmonization maps
# ---------------------------------------------------------------------------

class Segment(NamedTuple):
    lo: float
    hi: float
    slope: float
    intercept: float


@dataclass(frozen=True)
class HarmonizationMap:
    """Per-cycle piecewise-affine transform onto a reference instrument,
    followed by a unit conversion factor.

    Segments for a cycle must cover their declared input range contiguously
    and without overlap. The identity map is a single segment with slope 1,
    intercept 0, factor 1.
    """

    assay: str
    target: str
    factor: float
    cycles: Mapping[str, tuple[Segment, ...]]

    def __post_init__(self):
        if self.factor <= 0:
            raise ConfigError(f"{self.assay}: unit factor must be positive")
        for cycle, segs in self.cycles.items():
            if not segs:
                raise ConfigError(f"{self.assay}/{cycle}: no segments")
            ordered = sorted(segs, key=lambda s: s.lo)
            for s in ordered:
                if not s.lo < s.hi:
                    raise ConfigError(f"{self.assay}/{cycle}: empty segment {s}")
            for a, b in zip(ordered, ordered[1:]):
                if not math.isclose(a.hi, b.lo, rel_tol=0, abs_tol=1e-9):
                    raise ConfigError(
                        f"{self.assay}/{cycle}: segments must cover the range "
                        f"without overlap (gap or overlap at {a.hi} vs {b.lo})")

    @classmethod
    def identity(cls, assay: str, lo: float, hi: float,
                 cycles: Iterable[str] = ("*",), target: str = "reference",
                 factor: float = 1.0) -> "HarmonizationMap":
        seg = (Segment(lo, hi, 1.0, 0.0),)
        return cls(assay, target, factor, {c: seg for c in cycles})

    def segments_for(self, cycle: str) -> tuple[Segment, ...]:
        if cycle in self.cycles:
            return self.cycles[cycle]
        if "*" in self.cycles:
            return self.cycles["*"]
        raise ConfigError(f"assay {self.assay!r} has no harmonization map for cycle {cycle!r}")

    def inverse(self) -> "HarmonizationMap":
        """Map from target-instrument values back to the source scale.
        Requires every slope nonzero."""
        inv_cycles = {}
        for cycle, segs in self.cycles.items():
            inv = []
            for s in segs:
                if s.slope == 0:
                    raise ConfigError(f"{self.assay}/{cycle}: zero slope is not invertible")
                y_lo = (s.slope * s.lo + s.intercept) * self.factor
                y_hi = (s.slope * s.hi + s.intercept) * self.factor
                lo, hi = (y_lo, y_hi) if y_lo < y_hi else (y_hi, y_lo)
                inv.append(Segment(lo, hi, 1.0 / (s.slope * self.factor),
                                   -s.intercept / s.slope))
            inv_cycles[cycle] = tuple(sorted(inv, key=lambda s: s.lo))
        return HarmonizationMap(self.assay, f"inverse({self.target})", 1.0, inv_cycles)

    def to_dict(self) -> dict:
        return {"assay": self.assay, "target": self.target, "factor": self.factor,
                "cycles": {c: [{"range": [s.lo, s.hi], "slope": s.slope,
                                "intercept": s.intercept} for s in segs]
                           for c, segs in self.cycles.items()}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "HarmonizationMap":
        cycles = {c: tuple(Segment(float(s["range"][0]), float(s["range"][1]),
                                   float(s["slope"]), float(s["intercept"]))
                           for s in segs)
                  for c, segs in d["cycles"].items()}
        return cls(d["assay"], d.get("target", "reference"),
                   float(d.get("factor", 1.0)), cycles)


def harmonize_assay(value: float, cycle: str, hmap: HarmonizationMap) -> float:
    """Apply the cycle's segment transform, then the unit factor."""
    segs = hmap.segments_for(cycle)
    for i, s in enumerate(segs):
        last = i == len(segs) - 1
        if s.lo <= value < s.hi or (last and value == s.hi):
            return (s.slope * value + s.intercept) * hmap.factor
    raise DataQualityError(
        f"assay {hmap.assay!r}: value {value} outside harmonization range "
        f"[{segs[0].lo}, {segs[-1].hi}] for cycle {cycle!r}")


# ---------------------------------------------------------------------------
# Derivation rules
# ---------------------------------------------------------------------------

class BloodPressure(NamedTuple):
    systolic: float
    diastolic: float
    hypertension: bool


def average_blood_pressure(readings: Sequence[tuple[float, float]]) -> BloodPressure:
    """Mean of the second and third readings (the first is discarded as
    white-coat-inflated). Hypertension iff systolic > 130 or diastolic > 80,
    strict inequalities."""
    if len(readings) < 3:
        raise DataQualityError(f"need at least 3 blood-pressure readings, got {len(readings)}")
    sys = (readings[1][0] + readings[2][0]) / 2.0
    dia = (readings[1][1] + readings[2][1]) / 2.0
    return BloodPressure(sys, dia, sys > HYPERTENSION_SYSTOLIC or dia > HYPERTENSION_DIASTOLIC)


def average_two_day_diet(day1: Mapping[str, float | None],
                         day2: Mapping[str, float | None]) -> dict[str, float | None]:
    """Element-wise mean of the two recall days; a single present day passes
    through; both missing stays missing."""
    out: dict[str, float | None] = {}
    for key in set(day1) | set(day2):
        a, b = day1.get(key), day2.get(key)
        if a is None and b is None:
            out[key] = None
        elif a is None:
            out[key] = float(b)
        elif b is None:
            out[key] = float(a)
        else:
            out[key] = (float(a) + float(b)) / 2.0
    return out


def paired_t_test(day1: Sequence[float], day2: Sequence[float]) -> tuple[float, float]:
    """Paired t statistic on day differences with a two-sided p value.

    Identical inputs give exactly (0.0, 1.0). Nonzero differences with zero
    variance raise instead of returning infinities.
    """
    if len(day1) != len(day2):
        raise DataQualityError("paired t-test needs equal-length day vectors")
    n = len(day1)
    if n < 2:
        raise DataQualityError(f"paired t-test needs n >= 2, got {n}")
    diffs = [float(a) - float(b) for a, b in zip(day1, day2)]
    if all(d == 0.0 for d in diffs):
        return 0.0, 1.0
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        raise NumericError("degenerate variance: nonzero constant differences")
    t = mean / math.sqrt(var / n)
    p = 2.0 * float(stdtr(n - 1, -abs(t)))
    return t, p


def convert_crp(value_mg_dl: float, detection_limit_mg_l: float = 0.0) -> float | None:
    """mg/dL -> mg/L (factor 10); returns None when the converted value falls
    below the assay detection limit."""
    if value_mg_dl < 0:
        raise ValueError(f"CRP cannot be negative, got {value_mg_dl}")
    mg_l = value_mg_dl * 10.0
    if mg_l < detection_limit_mg_l:
        return None
    return mg_l


def smoking_monthly(days_smoked: int, cigarettes_per_day: int) -> float:
    """Cigarettes per month: days x per-day, with per-day capped at 95."""
    if not 0 <= days_smoked <= 30:
        raise ValueError(f"days smoked in past 30 must lie in [0, 30], got {days_smoked}")
    if cigarettes_per_day < 0:
        raise ValueError(f"cigarettes per day cannot be negative, got {cigarettes_per_day}")
    return float(days_smoked * min(cigarettes_per_day, CIGARETTES_PER_DAY_CAP))


def alcohol_daily(cups_per_day: float) -> float:
    """Average drinks per day, capped at 15 cups."""
    if cups_per_day < 0:
        raise ValueError(f"alcohol cups/day cannot be negative, got {cups_per_day}")
    return min(float(cups_per_day), ALCOHOL_CAP_CUPS)


def depression_flag(answers: Sequence[int | None]) -> int | None:
    """PHQ-9: 1 iff the nine-item total reaches 10. Any missing answer makes
    the flag missing."""
    if len(answers) != 9:
        raise ValueError(f"PHQ-9 needs exactly 9 answers, got {len(answers)}")
    if any(a is None for a in answers):
        return None
    vals = [int(a) for a in answers]
    if any(not 0 <= a <= 3 for a in vals):
        raise ValueError(f"PHQ-9 answers must lie in [0, 3], got {vals}")
    return 1 if sum(vals) >= PHQ9_CUTOFF else 0


@dataclass(frozen=True)
class SleepInputs:
    sld012: float | None = None  # weekday sleep hours
    sld013: float | None = None  # weekend sleep hours
    slq060: int | None = None    # doctor-diagnosed disorder
    slq050: int | None = None    # self-reported trouble sleeping
    slq120: int | None = None    # daytime sleepiness frequency 0-4

    def __post_init__(self):
        for h in (self.sld012, self.sld013):
            if h is not None and not 0 <= h <= 24:
                raise ValueError(f"sleep hours must lie in [0, 24], got {h}")
        if self.slq120 is not None and self.slq120 not in range(5):
            raise ValueError(f"daytime sleepiness must lie in 0..4, got {self.slq120}")


def sleep_disorder_indicator(inputs: SleepInputs, mode: str = "self_report_only") -> int | None:
    """Composite sleep-disorder indicator.

    full_sdi: 1 iff weighted average daily sleep D = (5*weekday + 2*weekend)/7
    falls outside [7, 9], or any disorder flag is set, or daytime sleepiness
    is frequent (>= 3). self_report_only: the self-reported flag alone.
    """
    if mode == "self_report_only":
        return inputs.slq050
    if mode != "full_sdi":
        raise ConfigError(f"unknown sleep mode {mode!r}")
    if inputs.sld012 is None or inputs.sld013 is None:
        return None
    d = (5.0 * inputs.sld012 + 2.0 * inputs.sld013) / 7.0
    flag = (d < 7.0 or d > 9.0
            or inputs.slq060 == 1
            or inputs.slq050 == 1
            or (inputs.slq120 is not None and inputs.slq120 >= 3))
    return 1 if flag else 0


class ActivityEntry(NamedTuple):
    domain: str      # recreation | work | household
    intensity: str   # moderate | vigorous
    minutes_per_week: float


def aggregate_physical_activity(entries: Iterable[ActivityEntry]) -> tuple[float, float]:
    """Sum recreation-domain minutes per week by intensity; work and
    household entries are deliberately ignored."""
    moderate = vigorous = 0.0
    for e in entries:
        if e.intensity not in ("moderate", "vigorous"):
            raise DataQualityError(f"unknown activity intensity {e.intensity!r}")
        if e.minutes_per_week < 0:
            raise ValueError(f"activity minutes cannot be negative, got {e.minutes_per_week}")
        if e.domain != "recreation":
            continue
        if e.intensity == "moderate":
            moderate += e.minutes_per_week
        else:
            vigorous += e.minutes_per_week
    return moderate, vigorous


def classify_glycemia(hba1c_percent: float) -> str:
    """normal < 5.7 <= prediabetes < 6.5 <= diabetes."""
    if not 0.0 < hba1c_percent < 20.0:
        raise ValueError(f"HbA1c out of plausible range (0, 20): {hba1c_percent}")
    if hba1c_percent < HBA1C_PREDIABETES:
        return "normal"
    if hba1c_percent < HBA1C_DIABETES:
        return "prediabetes"
    return "diabetes"


# ---------------------------------------------------------------------------
# Generic schema-mapped CSV parsing
# ---------------------------------------------------------------------------

def parse_csv(data: bytes | str, schema: FeatureSchema,
              column_map: Mapping[str, str] | None = None,
              id_column: str = "participant_id", cycle_column: str = "cycle",
              missing_codes: frozenset[str] = DEFAULT_MISSING_CODES) -> RecordSet:
    """Parse a delimited table into a RecordSet.

    ``column_map`` maps schema feature names to CSV column names (identity
    when omitted). Cells holding refusal / don't-know codes become missing
    fields; row order is preserved.
    """
    text = data.decode() if isinstance(data, bytes) else data
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataQualityError("CSV has no header row")
    header = rows[0]
    col_index = {c: i for i, c in enumerate(header)}
    cmap = dict(column_map) if column_map is not None else {
        f.name: f.name for f in schema.features if f.name in col_index}
    for feat_name, col in cmap.items():
        if feat_name not in schema.by_name:
            raise ConfigError(f"column map references unknown feature {feat_name!r}")
        if col not in col_index:
            raise ConfigError(f"required column {col!r} (feature {feat_name}) not in CSV header")
    for required in (id_column, cycle_column):
        if required not in col_index:
            raise ConfigError(f"required column {required!r} not in CSV header")

    records = []
    for rownum, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataQualityError(f"row {rownum}: expected {len(header)} cells, got {len(row)}")
        values: dict[str, Value | None] = {}
        for feat_name, col in cmap.items():
            cell = row[col_index[col]].strip()
            if cell.lower() in missing_codes:
                values[feat_name] = None
                continue
            kind = schema.by_name[feat_name].kind
            try:
                values[feat_name] = float(cell) if kind.is_continuous else int(float(cell))
            except ValueError:
                raise DataQualityError(
                    f"row {rownum}, column {col!r}: non-numeric cell {cell!r}") from None
        records.append(Record(row[col_index[id_column]], row[col_index[cycle_column]], values))
    return RecordSet(schema, records)


# ---------------------------------------------------------------------------
# Pipeline: raw family tables -> canonical RecordSet + audit
# ---------------------------------------------------------------------------

DIET_NUTRIENTS = ("KCAL", "PROT", "CARB", "FIBE", "TFAT", "CHOL", "SUGR")

# Raw questionnaire refusal codes (column-specific; ages like 77 are legal
# elsewhere, so these never apply globally).
ALCOHOL_INVALID_CODES = frozenset({"77", "99", "777", "999"})


@dataclass
class IngestConfig:
    harmonization_maps: dict[str, HarmonizationMap] = field(default_factory=dict)
    insulin_unit_factor: float = 6.945  # uU/mL -> pmol/L; config because unpublished
    crp_detection_limit_mg_per_l: float = 0.1
    sleep_mode: str = "self_report_only"
    alcohol_invalid_codes: frozenset[str] = ALCOHOL_INVALID_CODES

    @classmethod
    def from_file(cls, path: str | Path) -> "IngestConfig":
        with open(path) as f:
            doc = json.load(f)
        maps = {m["assay"]: HarmonizationMap.from_dict(m)
                for m in doc.get("harmonization_maps", [])}
        return cls(
            harmonization_maps=maps,
            insulin_unit_factor=float(doc.get("insulin_unit_factor", 6.945)),
            crp_detection_limit_mg_per_l=float(doc.get("crp_detection_limit_mg_per_l", 0.1)),
            sleep_mode=doc.get("sleep_mode", "self_report_only"),
            alcohol_invalid_codes=frozenset(
                str(c) for c in doc.get("alcohol_invalid_codes", sorted(ALCOHOL_INVALID_CODES))),
        )


RAW_FILES = ("demographics", "examination", "dietary", "laboratory", "questionnaire")


class Audit:
    """Counts of everything the pipeline dropped, capped, or converted."""

    def __init__(self):
        self.counts: dict[str, int] = {}
        self.by_feature: dict[str, dict[str, int]] = {}
        self.extra: dict = {}

    def bump(self, key: str, n: int = 1):
        self.counts[key] = self.counts.get(key, 0) + n

    def bump_feature(self, key: str, feature: str, n: int = 1):
        d = self.by_feature.setdefault(key, {})
        d[feature] = d.get(feature, 0) + n

    def to_dict(self) -> dict:
        return {"counts": self.counts, "by_feature": self.by_feature, **self.extra}


def _read_raw_table(path: Path) -> dict[tuple[str, str], dict[str, str]]:
    if not path.exists():
        raise ConfigError(f"raw input file not found: {path}")
    out: dict[tuple[str, str], dict[str, str]] = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out[(row["SEQN"], row["cycle"])] = row
    return out


def _cell(row: dict[str, str] | None, col: str,
          missing_codes: frozenset[str] = DEFAULT_MISSING_CODES) -> float | None:
    if row is None:
        return None
    cell = row.get(col, "").strip()
    if cell.lower() in missing_codes:
        return None
    try:
        return float(cell)
    except ValueError:
        raise DataQualityError(f"column {col!r}: non-numeric cell {cell!r}") from None


def run_ingest(raw_dir: str | Path, schema: FeatureSchema,
               config: IngestConfig | None = None) -> tuple[RecordSet, dict]:
    """Join the five raw family tables on (participant, cycle) and apply
    every preprocessing rule, producing a clean RecordSet and an audit."""
    config = config or IngestConfig()
    raw_dir = Path(raw_dir)
    tables = {name: _read_raw_table(raw_dir / f"{name}.csv") for name in RAW_FILES}
    keys = sorted(tables["demographics"].keys())
    audit = Audit()
    audit.bump("records_in", len(keys))

    diet_days: dict[str, tuple[list[float], list[float]]] = {n: ([], []) for n in DIET_NUTRIENTS}
    glycemia_counts = {"normal": 0, "prediabetes": 0, "diabetes": 0}
    hypertension_count = 0
    records = []

    for key in keys:
        demo = tables["demographics"][key]
        exam = tables["examination"].get(key)
        diet = tables["dietary"].get(key)
        lab = tables["laboratory"].get(key)
        quest = tables["questionnaire"].get(key)
        values: dict[str, Value | None] = {f.name: None for f in schema.features}

        # demographics: gender recoded 1/2 -> 0/1; poverty-income ratio banded
        gender = _cell(demo, "RIAGENDR")
        values["RIAGENDR"] = None if gender is None else int(gender) - 1
        for name in ("RIDAGEYR", "RIDRETH1", "DMDYRSUS", "DMDEDUC2", "DMDMARTL"):
            v = _cell(demo, name)
            values[name] = None if v is None else int(v)
        pir = _cell(demo, "INDFMPIR")
        values["INDFMPIR"] = None if pir is None else min(int(pir), 5)

        # examination: BMI direct; BP averaged from readings 2 and 3
        values["BMXBMI"] = _cell(exam, "BMXBMI")
        readings = []
        for i in (1, 2, 3, 4):
            s, d = _cell(exam, f"BPXSY{i}"), _cell(exam, f"BPXDI{i}")
            if s is not None and d is not None:
                readings.append((s, d))
        if len(readings) >= 3:
            bp = average_blood_pressure(readings)
            values["BPXSY"], values["BPXDI"] = bp.systolic, bp.diastolic
            if bp.hypertension:
                hypertension_count += 1
        elif readings:
            audit.bump("bp_insufficient_readings")

        # dietary: two-day averages
        if diet is not None:
            day1 = {n: _cell(diet, f"DR1T{n}") for n in DIET_NUTRIENTS}
            day2 = {n: _cell(diet, f"DR2T{n}") for n in DIET_NUTRIENTS}
            for n in DIET_NUTRIENTS:
                if day1[n] is not None and day2[n] is not None:
                    diet_days[n][0].append(day1[n])
                    diet_days[n][1].append(day2[n])
            avg = average_two_day_diet(day1, day2)
            for n in DIET_NUTRIENTS:
                values[f"DRXT{n}"] = avg[n]

        # laboratory: harmonization, unit conversions, detection limit
        glu = _cell(lab, "LBXGLUSI")
        if glu is not None and "fasting_glucose" in config.harmonization_maps:
            glu = harmonize_assay(glu, key[1], config.harmonization_maps["fasting_glucose"])
            audit.bump("glucose_harmonized")
        values["LBXGLUSI"] = glu
        ogtt = _cell(lab, "LBXGLTSI")
        if ogtt is not None and "two_hour_glucose" in config.harmonization_maps:
            ogtt = harmonize_assay(ogtt, key[1], config.harmonization_maps["two_hour_glucose"])
            audit.bump("glucose_harmonized")
        values["LBXGLTSI"] = ogtt
        insulin = _cell(lab, "LBXIN")
        if insulin is not None:
            if "insulin" in config.harmonization_maps:
                insulin = harmonize_assay(insulin, key[1], config.harmonization_maps["insulin"])
                audit.bump("insulin_harmonized")
            values["LBXINSI"] = insulin * config.insulin_unit_factor
        hscrp = _cell(lab, "LBXHSCRP")
        if hscrp is not None:
            # already mg/L; detection limit still applies
            if hscrp < config.crp_detection_limit_mg_per_l:
                audit.bump("crp_below_detection_limit")
            else:
                values["LBXCRP"] = hscrp
        else:
            crp_mgdl = _cell(lab, "LBXCRP_MGDL")
            if crp_mgdl is not None:
                converted = convert_crp(crp_mgdl, config.crp_detection_limit_mg_per_l)
                if converted is None:
                    audit.bump("crp_below_detection_limit")
                else:
                    values["LBXCRP"] = converted
                    audit.bump("crp_converted")
        values["LBXGH"] = _cell(lab, "LBXGH")
        if values["LBXGH"] is not None:
            glycemia_counts[classify_glycemia(values["LBXGH"])] += 1

        # questionnaire: alcohol, smoking, depression, sleep, activity
        if quest is not None:
            alq_cell = quest.get("ALQ130", "").strip()
            if alq_cell in config.alcohol_invalid_codes:
                audit.bump("alcohol_invalid_dropped")
            else:
                alq = _cell(quest, "ALQ130")
                if alq is not None:
                    if alq > ALCOHOL_CAP_CUPS:
                        audit.bump("alcohol_capped")
                    values["ALQ"] = alcohol_daily(alq)
            days = _cell(quest, "SMD641")
            per_day = _cell(quest, "SMD650")
            if days is not None and per_day is not None:
                if per_day > CIGARETTES_PER_DAY_CAP:
                    audit.bump("smoking_per_day_capped")
                values["SMD"] = smoking_monthly(int(days), int(per_day))
            answers = [_cell(quest, f"DPQ{i:03d}") for i in range(10, 100, 10)]
            values["CIQ"] = depression_flag([None if a is None else int(a) for a in answers])
            sleep = SleepInputs(
                sld012=_cell(quest, "SLD012"), sld013=_cell(quest, "SLD013"),
                slq060=_int_or_none(_cell(quest, "SLQ060")),
                slq050=_int_or_none(_cell(quest, "SLQ050")),
                slq120=_int_or_none(_cell(quest, "SLQ120")))
            values["SLQ050"] = sleep_disorder_indicator(sleep, config.sleep_mode)
            entries = []
            for domain in ("REC", "WORK", "HOME"):
                for intensity in ("MOD", "VIG"):
                    minutes = _cell(quest, f"PAQ_{domain}_{intensity}")
                    if minutes is not None:
                        entries.append(ActivityEntry(
                            {"REC": "recreation", "WORK": "work", "HOME": "household"}[domain],
                            {"MOD": "moderate", "VIG": "vigorous"}[intensity], minutes))
            if entries:
                mod, vig = aggregate_physical_activity(entries)
                values["PAQ_MODERATE"], values["PAQ_VIGOROUS"] = mod, vig

        record = Record(key[0], key[1], values)
        # record invariant: present values must lie inside schema ranges, so
        # anything out of range after derivation becomes missing
        bad = {v.feature for v in validate_record(record, schema)}
        if bad:
            vals = dict(values)
            for name in bad:
                vals[name] = None
                audit.bump_feature("out_of_range_dropped", name)
            record = Record(key[0], key[1], vals)
        records.append(record)

    rs = RecordSet(schema, records)

    audit.bump("records_out", len(rs.records))
    audit.extra["diet_paired_t_tests"] = {
        n: dict(zip(("t", "p", "n"), (*paired_t_test(d1, d2), len(d1))))
        for n, (d1, d2) in diet_days.items() if len(d1) >= 2 and not _degenerate(d1, d2)
    }
    audit.extra["glycemia_counts"] = glycemia_counts
    audit.extra["hypertension_count"] = hypertension_count
    return rs, audit.to_dict()


def _int_or_none(v: float | None) -> int | None:
    return None if v is None else int(v)


def _degenerate(d1: Sequence[float], d2: Sequence[float]) -> bool:
    diffs = [a - b for a, b in zip(d1, d2)]
    first = diffs[0]
    return all(d == first for d in diffs) and first != 0.0
