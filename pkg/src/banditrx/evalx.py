"""Experiment orchestration: temperature sweeps, repeated-run stability
studies, and tidy plot-data exports.

Training itself lives in the bandit module; this layer runs it over grids,
pairs the seeds so cells are comparable, and writes everything to disk in
formats any plotting tool can consume.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .bandit import MultiRunResult, SacConfig, TrainHistory, multi_run, train
from .core import FeatureSchema
from .envmodel import EnvModel
from .errors import BanditrxError, ConfigError
from .aggregate import Sample

DEFAULT_ALPHAS = (0.05, 0.2, 0.5, 1.0)
SMOOTHING_FACTOR = 0.9


@dataclass(frozen=True)
class SweepSpec:
    """Grid of entropy temperatures to train under one shared base config."""

    base: SacConfig
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    out_dir: str | Path | None = None
    threads: int = 1

    def __post_init__(self):
        if not self.alphas:
            raise ConfigError("sweep needs at least one alpha")
        if len(set(self.alphas)) != len(self.alphas):
            raise ConfigError(f"sweep alphas must be distinct, got {self.alphas}")
        if any(a < 0 for a in self.alphas):
            raise ConfigError(f"sweep alphas must be >= 0, got {self.alphas}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")


@dataclass(frozen=True)
class SweepResult:
    histories: dict[float, TrainHistory]
    summary: list[dict]


def _final_reward(history: TrainHistory, tail: float = 0.1) -> float:
    n = len(history)
    start = max(0, n - max(1, int(round(n * tail))))
    return float(sum(history.mean_reward[start:]) / (n - start))


def run_alpha_sweep(spec: SweepSpec, samples: Sequence[Sample], env: EnvModel,
                    schema: FeatureSchema | None = None) -> SweepResult:
    """Train one policy per temperature, all from the same seed.

    The shared seed makes the sweep paired: every cell starts from the same
    initial networks and consumes the same noise stream, so differences in
    the curves are attributable to the temperature alone.  Cells run on a
    thread pool and are merged in ascending-alpha order regardless of
    completion order.
    """

    def cell(alpha: float) -> tuple[float, TrainHistory]:
        cfg = replace(spec.base, alpha=alpha)
        try:
            _, _, history = train(samples, env, cfg, schema=schema)
        except BanditrxError as e:
            raise type(e)(f"alpha={alpha}: {e}") from e
        return alpha, history

    histories: dict[float, TrainHistory] = {}
    if spec.threads == 1:
        for alpha in spec.alphas:
            histories[alpha] = cell(alpha)[1]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=spec.threads) as pool:
            for alpha, history in pool.map(cell, spec.alphas):
                histories[alpha] = history
    histories = {a: histories[a] for a in sorted(histories)}

    summary = [{"alpha": a,
                "final_reward": _final_reward(h),
                "final_actor_loss": h.actor[-1],
                "final_critic1_loss": h.critic1[-1],
                "final_critic2_loss": h.critic2[-1]}
               for a, h in histories.items()]
    summary.sort(key=lambda row: -row["final_reward"])
    for rank, row in enumerate(summary, start=1):
        row["rank"] = rank

    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for a, h in histories.items():
            h.write_csv(out / f"history_alpha_{a:g}.csv")
        (out / "sweep_summary.json").write_text(json.dumps(summary, indent=2))
        (out / "plot_data.csv").write_text(
            export_plot_data({f"alpha_{a:g}": h for a, h in histories.items()}))
    return SweepResult(histories, summary)


def smooth_series(values: Sequence[float],
                  factor: float = SMOOTHING_FACTOR) -> list[float]:
    """Exponential smoothing: s_0 = x_0, s_t = factor*s_{t-1} + (1-factor)*x_t.

    A constant series is a fixed point; an impulse decays geometrically with
    ratio `factor`.
    """
    if not 0.0 <= factor < 1.0:
        raise ValueError(f"smoothing factor must be in [0, 1), got {factor}")
    out: list[float] = []
    for x in values:
        out.append(x if not out else factor * out[-1] + (1.0 - factor) * x)
    return out


def export_plot_data(histories: Mapping[str, TrainHistory],
                     factor: float = SMOOTHING_FACTOR) -> str:
    """Long-format CSV (series, iteration, value) for all histories.

    Per history, emits critic1/critic2/actor losses, the raw mean reward, and
    a smoothed reward series.  Raw values are written with repr so they
    round-trip bit-exact.
    """
    if not histories:
        raise ValueError("export needs at least one history")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "iteration", "value"])
    for name, h in histories.items():
        series = {"critic1_loss": h.critic1, "critic2_loss": h.critic2,
                  "actor_loss": h.actor, "reward": h.mean_reward,
                  "reward_smoothed": smooth_series(h.mean_reward, factor)}
        for label, values in series.items():
            for i, v in enumerate(values):
                w.writerow([f"{name}/{label}", i, repr(float(v))])
    return buf.getvalue()


def import_plot_data(text: str) -> dict[str, list[float]]:
    """Inverse of export_plot_data: series name -> ordered values."""
    out: dict[str, list[tuple[int, float]]] = {}
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["series", "iteration", "value"]:
        raise ConfigError(f"unexpected plot-data header: {header}")
    for row in reader:
        out.setdefault(row[0], []).append((int(row[1]), float(row[2])))
    return {k: [v for _, v in sorted(pairs)] for k, pairs in out.items()}


@dataclass(frozen=True)
class StabilityStudy:
    """Repeated independent runs plus the derived reward band."""

    result: MultiRunResult
    runs: int
    early_band: float
    late_band: float

    def to_dict(self) -> dict:
        return {"runs": self.runs, "early_band": self.early_band,
                "late_band": self.late_band,
                "narrowed": self.late_band < self.early_band}


def run_stability_study(samples: Sequence[Sample], env: EnvModel,
                        cfg: SacConfig, runs: int = 20,
                        schema: FeatureSchema | None = None,
                        early: tuple[int, int] = (0, 100),
                        late: tuple[int, int] | None = None,
                        out_dir: str | Path | None = None) -> StabilityStudy:
    """Run the seed-spawned repeated study and summarize band narrowing.

    `early` and `late` are iteration windows; by default the late window is
    everything from iteration 500 on.
    """
    result = multi_run(samples, env, cfg, runs=runs, schema=schema)
    iters = result.band_mean.shape[0]
    if late is None:
        late = (min(500, iters - 1), iters)
    study = StabilityStudy(result, runs,
                           result.band_width(*early), result.band_width(*late))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "reward_band.csv").write_text(result.to_csv())
        (out / "stability.json").write_text(json.dumps(study.to_dict(), indent=2))
    return study
