"""Figure rendering for run artifacts.

Every function takes data already on disk (or in memory), draws one
matplotlib figure, and writes it next to the delimited output it came from.
Rendering is file-only: no interactive backends, no display requirement.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cluster import ScanResult  # noqa: E402
from .errors import ConfigError  # noqa: E402
from .evalx import import_plot_data, smooth_series  # noqa: E402
from .reward import MagniParams, magni_risk, zero_risk_glucose  # noqa: E402

FIGURE_DPI = 120


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=FIGURE_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def _read_csv_columns(path: Path) -> dict[str, list[float]]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header:
            raise ConfigError(f"{path}: empty CSV")
        cols: dict[str, list[float]] = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                cols[name].append(float(cell))
    return cols


def plot_history_csv(path: str | Path, out_path: str | Path,
                     title: str = "Training curves") -> Path:
    """Two-panel figure for one training-history CSV: losses and reward."""
    cols = _read_csv_columns(Path(path))
    for needed in ("iteration", "critic1", "critic2", "actor", "mean_reward"):
        if needed not in cols:
            raise ConfigError(f"{path}: missing column {needed!r}")
    it = cols["iteration"]
    fig, (ax_loss, ax_rew) = plt.subplots(1, 2, figsize=(11, 4))
    ax_loss.plot(it, cols["critic1"], label="critic 1", lw=0.9)
    ax_loss.plot(it, cols["critic2"], label="critic 2", lw=0.9)
    ax_loss.plot(it, cols["actor"], label="actor", lw=0.9)
    ax_loss.set_xlabel("iteration")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_loss.set_title("losses")
    ax_rew.plot(it, cols["mean_reward"], lw=0.7, alpha=0.4, label="raw")
    ax_rew.plot(it, smooth_series(cols["mean_reward"]), lw=1.4, label="smoothed")
    ax_rew.set_xlabel("iteration")
    ax_rew.set_ylabel("mean batch reward")
    ax_rew.legend()
    ax_rew.set_title("reward")
    fig.suptitle(title)
    return _save(fig, out_path)


def plot_sweep(plot_data: str | Path, out_path: str | Path) -> Path:
    """Overlayed smoothed-reward and actor-loss curves across a sweep.

    Accepts the long-format plot-data CSV (path or raw text).
    """
    text = plot_data if isinstance(plot_data, str) and "\n" in plot_data \
        else Path(plot_data).read_text()
    series = import_plot_data(text)
    fig, (ax_rew, ax_act) = plt.subplots(1, 2, figsize=(11, 4))
    drew = False
    for name, values in sorted(series.items()):
        run, _, label = name.rpartition("/")
        if label == "reward_smoothed":
            ax_rew.plot(values, lw=1.2, label=run)
            drew = True
        elif label == "actor_loss":
            ax_act.plot(values, lw=0.9, label=run)
    if not drew:
        raise ConfigError("plot data holds no reward_smoothed series")
    ax_rew.set_xlabel("iteration")
    ax_rew.set_ylabel("smoothed reward")
    ax_rew.set_title("reward")
    ax_rew.legend()
    ax_act.set_xlabel("iteration")
    ax_act.set_ylabel("actor loss")
    ax_act.set_title("actor loss")
    ax_act.legend()
    return _save(fig, out_path)


def plot_reward_band(band_csv: str | Path, out_path: str | Path) -> Path:
    """Mean reward with a min-max envelope from a repeated-run study."""
    cols = _read_csv_columns(Path(band_csv))
    for needed in ("iteration", "mean", "min", "max"):
        if needed not in cols:
            raise ConfigError(f"{band_csv}: missing column {needed!r}")
    it = cols["iteration"]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.fill_between(it, cols["min"], cols["max"], alpha=0.25, label="min-max band")
    ax.plot(it, cols["mean"], lw=1.2, label="mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean batch reward")
    ax.set_title("Reward across repeated runs")
    ax.legend()
    return _save(fig, out_path)


def plot_risk_curve(out_path: str | Path, params: MagniParams | None = None,
                    lo: float = 20.0, hi: float = 400.0) -> Path:
    """The glucose risk curve with its zero-risk root marked.

    The asymmetry is the point of the figure: the penalty climbs much faster
    below the root than above it.
    """
    params = params or MagniParams()
    bg = np.linspace(lo, hi, 2000)
    root = zero_risk_glucose(params)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(bg, magni_risk(bg, params), lw=1.4)
    ax.axvline(root, color="grey", ls="--", lw=0.9,
               label=f"zero-risk glucose {root:.1f}")
    ax.set_xlabel("blood glucose")
    ax.set_ylabel("risk")
    ax.set_title("Glucose risk (hypoglycemia side steeper)")
    ax.legend()
    return _save(fig, out_path)


def plot_silhouette_scan(scan: ScanResult | Sequence[tuple[int, float]],
                         out_path: str | Path) -> Path:
    """Average silhouette width against cluster count."""
    entries = scan.entries if isinstance(scan, ScanResult) else tuple(scan)
    if not entries:
        raise ConfigError("silhouette scan holds no entries")
    ks = [k for k, _ in entries]
    widths = [w for _, w in entries]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, widths, marker="o")
    # same tie rule as the k scan: highest width, then smallest k
    best = min(entries, key=lambda e: (-e[1], e[0]))
    ax.axvline(best[0], color="grey", ls="--", lw=0.9, label=f"chosen k={best[0]}")
    ax.set_xlabel("k")
    ax.set_ylabel("average silhouette width")
    ax.set_title("Cluster-count scan")
    ax.set_xticks(ks)
    ax.legend()
    return _save(fig, out_path)


def plot_env_metrics(metrics_csv: str | Path, out_path: str | Path) -> Path:
    """Train/validation MSE per epoch for the environment model."""
    cols = _read_csv_columns(Path(metrics_csv))
    for needed in ("epoch", "train_mse", "val_mse"):
        if needed not in cols:
            raise ConfigError(f"{metrics_csv}: missing column {needed!r}")
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(cols["epoch"], cols["train_mse"], lw=1.0, label="train")
    ax.plot(cols["epoch"], cols["val_mse"], lw=1.0, label="validation")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (target units)")
    ax.set_title("Environment-model fit")
    ax.legend()
    return _save(fig, out_path)


def render_run_report(run_dir: str | Path, out_dir: str | Path | None = None,
                      ) -> list[Path]:
    """Render every figure the artifacts in `run_dir` support.

    Looks for the standard file names the CLI writes and silently skips
    whatever is absent; returns the list of figures written.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"run directory not found: {run_dir}")
    out = Path(out_dir) if out_dir is not None else run_dir / "figures"
    written: list[Path] = []
    if (run_dir / "history.csv").exists():
        written.append(plot_history_csv(run_dir / "history.csv",
                                        out / "training_curves.png"))
    for hist in sorted(run_dir.glob("history_alpha_*.csv")):
        name = hist.stem.replace("history_", "")
        written.append(plot_history_csv(hist, out / f"training_curves_{name}.png",
                                        title=f"Training curves ({name})"))
    if (run_dir / "plot_data.csv").exists():
        written.append(plot_sweep(run_dir / "plot_data.csv",
                                  out / "sweep_comparison.png"))
    if (run_dir / "reward_band.csv").exists():
        written.append(plot_reward_band(run_dir / "reward_band.csv",
                                        out / "reward_band.png"))
    if (run_dir / "env_metrics.csv").exists():
        written.append(plot_env_metrics(run_dir / "env_metrics.csv",
                                        out / "env_model_fit.png"))
    if (run_dir / "silhouette_scan.csv").exists():
        cols = _read_csv_columns(run_dir / "silhouette_scan.csv")
        entries = [(int(k), w) for k, w in zip(cols["k"], cols["asw"])]
        written.append(plot_silhouette_scan(entries, out / "silhouette_scan.png"))
    written.append(plot_risk_curve(out / "risk_curve.png"))
    return written
