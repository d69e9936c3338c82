"""Command-line entry point.

One binary with subcommands covering the full pipeline: raw-table ingest,
Gower/PAM clustering, quantile aggregation, environment-model fitting,
policy training, sweeps, repeated-run studies, figure rendering, fixture
generation, and the inference service.

Exit codes: 0 success, 2 usage or configuration, 3 data quality, 4 numeric
failure.  Every command is deterministic given identical inputs and
`--seed`; the `pipeline` command derives one child seed per stage from the
root seed (spawn order: cluster, environment model, policy, repeated runs).
`--config FILE` loads a JSON object whose entries override the command-line
flags of the same name.  The environment variable BANDITRX_THREADS caps
worker threads where a command parallelizes.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .aggregate import (DEFAULT_BUDGET, allocate_counts, build_sample_set,
                        read_samples, segment_cluster, write_samples)
from .bandit import SacConfig, save_critics, save_policy, train
from .cluster import (GowerConfig, gower_matrix, filter_clusters, pam,
                      scan_k, silhouette)
from .core import FeatureSchema, RecordSet, load_schema
from .envmodel import load_env, metrics_to_csv, save_env, train_env
from .errors import BanditrxError, ConfigError, DataQualityError
from .evalx import (DEFAULT_ALPHAS, SweepSpec, run_alpha_sweep,
                    run_stability_study)
from .fixtures import FixtureSpec, generate_fixture
from .ingest import IngestConfig, run_ingest


def _threads_default() -> int:
    raw = os.environ.get("BANDITRX_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"BANDITRX_THREADS must be an integer, got {raw!r}") from None


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_manifest(out_dir: Path, command: str, config: dict,
                   inputs: list[Path], outputs: list[Path]) -> Path:
    """Reproducibility manifest: config, versions, and content hashes.

    Deliberately carries no timestamps so reruns with the same seed produce
    byte-identical manifests.
    """
    doc = {
        "command": command,
        "config": config,
        "versions": {"banditrx": __version__,
                     "python": ".".join(map(str, sys.version_info[:3])),
                     "numpy": np.__version__},
        # keyed by file name, not path, so identical runs in different
        # directories produce identical manifests
        "inputs": {p.name: _sha256(p) for p in sorted(set(inputs))},
        "outputs": {p.name: _sha256(p) for p in sorted(set(outputs))},
    }
    return _write_json(out_dir / "manifest.json", doc)


def _apply_config_file(config_path: str | None, values: dict) -> dict:
    """Merge a JSON config over flag values (file entries win)."""
    if config_path is None:
        return values
    p = Path(config_path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        overrides = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {p} is not valid JSON: {e}") from None
    if not isinstance(overrides, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    unknown = set(overrides) - set(values)
    if unknown:
        raise ConfigError(f"config file {p} has unknown keys: {sorted(unknown)}")
    merged = dict(values)
    merged.update(overrides)
    return merged


def _parse_int_list(text: str, flag: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated integers, got {text!r}") from None


def _parse_float_list(text: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, got {text!r}") from None


@click.group()
@click.version_option(version=__version__, prog_name="banditrx")
def cli():
    """Offline prescription-policy pipeline.

    Exit codes: 0 success, 2 usage/config, 3 data quality, 4 numeric failure.
    """


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

@cli.command("make-fixtures")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n", default=400, show_default=True, help="Participant count.")
@click.option("--clusters", default=4, show_default=True,
              help="Planted demographic clusters.")
@click.option("--seed", default=0, show_default=True)
@click.option("--missing", default=0.05, show_default=True,
              help="Per-cell missingness rate; 0 disables.")
@click.option("--cycles", default="2017-2018", show_default=True,
              help="Comma-separated survey cycle labels.")
def cmd_make_fixtures(out_dir, n, clusters, seed, missing, cycles):
    """Generate synthetic raw family tables with planted structure."""
    spec = FixtureSpec(n=n, clusters=clusters, seed=seed, missing_rate=missing,
                       cycles=tuple(c.strip() for c in cycles.split(",") if c.strip()))
    manifest = generate_fixture(out_dir, spec)
    for name, path in sorted(manifest.paths.items()):
        click.echo(f"wrote {name}: {path}")


# ---------------------------------------------------------------------------
# Ingest
# ---------------------------------------------------------------------------

@cli.command("ingest")
@click.option("--raw", "raw_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--audit", "audit_path", type=click.Path(dir_okay=False),
              help="Audit JSON destination [default: <out>.audit.json].")
@click.option("--config", "config_path", type=click.Path(),
              help="Ingest config JSON (harmonization maps, unit factors).")
@click.option("--strict", is_flag=True,
              help="Fail (exit 3) if any value was dropped or invalid.")
def cmd_ingest(raw_dir, schema_path, out_path, audit_path, config_path, strict):
    """Join raw family tables into the clean feature table."""
    schema = load_schema(schema_path)
    config = IngestConfig.from_file(config_path) if config_path else IngestConfig()
    records, audit = run_ingest(raw_dir, schema, config)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    records.write_csv(out)
    audit_file = Path(audit_path) if audit_path else out.with_suffix(out.suffix + ".audit.json")
    _write_json(audit_file, audit)
    click.echo(f"wrote {len(records)} records to {out}")
    click.echo(f"wrote audit to {audit_file}")
    if strict:
        drops = {k: v for k, v in audit["counts"].items()
                 if k not in ("records_in", "records_out") and v}
        if drops or audit["by_feature"]:
            raise DataQualityError(
                f"strict mode: ingest dropped or altered values: "
                f"{drops or audit['by_feature']}")


# ---------------------------------------------------------------------------
# Cluster
# ---------------------------------------------------------------------------

@cli.command("cluster")
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--k", type=int, help="Fixed cluster count (skips the scan).")
@click.option("--k-min", default=2, show_default=True)
@click.option("--k-max", default=6, show_default=True)
@click.option("--features", help="Comma-separated Gower feature subset.")
@click.option("--sample-size", type=int,
              help="Silhouette per-cluster subsample cap for large n.")
@click.option("--seed", default=0, show_default=True)
@click.option("--scan-out", type=click.Path(dir_okay=False),
              help="Silhouette-scan CSV destination.")
@click.option("--save-distances", type=click.Path(dir_okay=False),
              help="Persist the condensed distance matrix.")
def cmd_cluster(data_path, schema_path, out_path, k, k_min, k_max, features,
                sample_size, seed, scan_out, save_distances):
    """Gower distances + medoid clustering with a silhouette k scan."""
    schema = load_schema(schema_path)
    records = RecordSet.read_csv(data_path, schema)
    names = tuple(f.strip() for f in features.split(",")) if features else None
    cfg = (GowerConfig.from_records(records, features=names)
           if names else GowerConfig.from_records(records))
    matrix = gower_matrix(records, cfg)
    if save_distances:
        matrix.save(save_distances)

    scan_doc = None
    if k is None:
        if not 2 <= k_min <= k_max:
            raise ConfigError(f"need 2 <= k-min <= k-max, got [{k_min}, {k_max}]")
        scan = scan_k(matrix, range(k_min, min(k_max, matrix.n - 1) + 1), seed=seed)
        k = scan.best_k
        scan_doc = scan.to_dict()
        if scan_out:
            lines = ["k,asw"] + [f"{kk},{asw!r}" for kk, asw in scan.entries]
            Path(scan_out).write_text("\n".join(lines) + "\n")
    clustering = pam(matrix, k, seed=seed)
    asw, _ = silhouette(matrix, clustering, sample_size=sample_size, seed=seed)
    kept, filter_audit = filter_clusters(clustering, records)

    doc = {"format": "banditrx-clustering", "version": 1,
           "gower": cfg.to_dict(), "clustering": clustering.to_dict(),
           "asw": asw, "kept_clusters": kept, "filter": filter_audit,
           "scan": scan_doc}
    _write_json(Path(out_path), doc)
    click.echo(f"k={k} asw={asw:.4f} kept={len(kept)}/{clustering.k} -> {out_path}")


def _load_clustering(path: str | Path):
    from .cluster import Clustering
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"clustering file not found: {p}")
    doc = json.loads(p.read_text())
    if doc.get("format") != "banditrx-clustering":
        raise ConfigError(f"{p}: not a clustering file")
    c = doc["clustering"]
    clustering = Clustering(int(c["k"]), tuple(c["medoids"]),
                            tuple(c["assignment"]), float(c["objective"]),
                            int(c["swap_iterations"]), bool(c["converged"]))
    return GowerConfig.from_dict(doc["gower"]), clustering, list(doc["kept_clusters"])


# ---------------------------------------------------------------------------
# Aggregate
# ---------------------------------------------------------------------------

@cli.command("aggregate")
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--clustering", "clustering_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--budget", default=DEFAULT_BUDGET, show_default=True)
@click.option("--audit", "audit_path", type=click.Path(dir_okay=False))
def cmd_aggregate(data_path, schema_path, clustering_path, out_path, budget,
                  audit_path):
    """Segment clusters, allocate the budget, emit the sample table."""
    schema = load_schema(schema_path)
    records = RecordSet.read_csv(data_path, schema)
    cfg, clustering, kept = _load_clustering(clustering_path)
    matrix = gower_matrix(records, cfg)
    segmented = [segment_cluster(matrix, records, clustering.members(c), c)
                 for c in kept]
    if not segmented:
        raise DataQualityError("no clusters survived filtering; nothing to aggregate")
    counts = allocate_counts([sc.size for sc in segmented], budget)
    samples, audit = build_sample_set(segmented, counts, records)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_samples(samples, schema, out)
    audit["allocations"] = {str(sc.cluster_id): c
                            for sc, c in zip(segmented, counts)}
    audit_file = Path(audit_path) if audit_path else out.with_suffix(out.suffix + ".audit.json")
    _write_json(audit_file, audit)
    click.echo(f"wrote {len(samples)} samples to {out}")


# ---------------------------------------------------------------------------
# Environment model
# ---------------------------------------------------------------------------

@cli.command("train-env")
@click.option("--samples", "samples_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--metrics", "metrics_path", type=click.Path(dir_okay=False))
@click.option("--epochs", default=1000, show_default=True)
@click.option("--batch-size", default=64, show_default=True)
@click.option("--split", default=0.2, show_default=True)
@click.option("--hidden", default="64,64", show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_train_env(samples_path, schema_path, out_path, metrics_path, epochs,
                  batch_size, split, hidden, lr, seed):
    """Fit the glucose regressor on the sample table."""
    schema = load_schema(schema_path)
    samples = read_samples(samples_path, schema)
    model, metrics = train_env(samples, schema, split=split, epochs=epochs,
                               batch_size=batch_size, seed=seed,
                               hidden=_parse_int_list(hidden, "--hidden"), lr=lr)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_env(model, out)
    best = min(metrics, key=lambda m: m.val_mse)
    if metrics_path:
        Path(metrics_path).write_text(metrics_to_csv(metrics))
    click.echo(f"best val MSE {best.val_mse:.6g} at epoch {best.epoch} -> {out}")


# ---------------------------------------------------------------------------
# Policy training
# ---------------------------------------------------------------------------

def _sac_config(config_path, **flags) -> SacConfig:
    values = _apply_config_file(config_path, flags)
    return SacConfig(alpha=values["alpha"], batch_size=values["batch_size"],
                     iterations=values["iterations"],
                     lr_actor=values["lr_actor"], lr_critic=values["lr_critic"],
                     tau=values["tau"], seed=values["seed"],
                     runs=values.get("runs", 100),
                     hidden=tuple(values["hidden"]) if not isinstance(values["hidden"], str)
                     else _parse_int_list(values["hidden"], "--hidden"))


sac_options = [
    click.option("--alpha", default=0.2, show_default=True,
                 help="Entropy temperature."),
    click.option("--iterations", default=1000, show_default=True),
    click.option("--batch-size", default=256, show_default=True),
    click.option("--tau", default=0.005, show_default=True),
    click.option("--lr-actor", default=3e-4, show_default=True),
    click.option("--lr-critic", default=3e-4, show_default=True),
    click.option("--hidden", default="64,64", show_default=True),
    click.option("--seed", default=0, show_default=True),
    click.option("--config", "config_path", type=click.Path(),
                 help="JSON overriding these flags (file entries win)."),
]


def _with_sac_options(f):
    for opt in reversed(sac_options):
        f = opt(f)
    return f


@cli.command("train-sac")
@click.option("--samples", "samples_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--env", "env_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--critics-out", type=click.Path(dir_okay=False))
@click.option("--history", "history_path", type=click.Path(dir_okay=False))
@_with_sac_options
def cmd_train_sac(samples_path, env_path, schema_path, out_path, critics_out,
                  history_path, config_path, **flags):
    """Train the prescription policy against the environment model."""
    schema = load_schema(schema_path)
    samples = read_samples(samples_path, schema)
    env = load_env(env_path)
    cfg = _sac_config(config_path, **flags)
    policy, critics, history = train(samples, env, cfg, schema=schema)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_policy(policy, out)
    if critics_out:
        save_critics(critics, critics_out)
    if history_path:
        history.write_csv(history_path)
    tail = max(1, len(history) // 10)
    final = sum(history.mean_reward[-tail:]) / tail
    click.echo(f"final-10% mean reward {final:.4f} -> {out}")


@cli.command("sweep")
@click.option("--samples", "samples_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--env", "env_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--alphas", default=",".join(str(a) for a in DEFAULT_ALPHAS),
              show_default=True, help="Comma-separated temperatures.")
@click.option("--threads", default=None, type=int,
              help="Worker threads [default: BANDITRX_THREADS or 1].")
@_with_sac_options
def cmd_sweep(samples_path, env_path, schema_path, out_dir, alphas, threads,
              config_path, **flags):
    """Paired-seed temperature sweep with per-cell curves and a ranking."""
    schema = load_schema(schema_path)
    samples = read_samples(samples_path, schema)
    env = load_env(env_path)
    base = _sac_config(config_path, **flags)
    spec = SweepSpec(base=base, alphas=_parse_float_list(alphas, "--alphas"),
                     out_dir=out_dir,
                     threads=threads if threads is not None else _threads_default())
    result = run_alpha_sweep(spec, samples, env, schema=schema)
    out = Path(out_dir)
    outputs = sorted(out.glob("*.csv")) + [out / "sweep_summary.json"]
    write_manifest(out, "sweep", {"alphas": list(spec.alphas),
                                  "sac": base.to_dict()},
                   [Path(samples_path), Path(env_path)], outputs)
    for row in result.summary:
        click.echo(f"alpha={row['alpha']:g} rank={row['rank']} "
                   f"final_reward={row['final_reward']:.4f}")


@cli.command("multirun")
@click.option("--samples", "samples_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--env", "env_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--runs", default=20, show_default=True)
@_with_sac_options
def cmd_multirun(samples_path, env_path, schema_path, out_dir, runs,
                 config_path, **flags):
    """Repeated independent runs; reports the reward band and its narrowing."""
    schema = load_schema(schema_path)
    samples = read_samples(samples_path, schema)
    env = load_env(env_path)
    cfg = _sac_config(config_path, **flags)
    study = run_stability_study(samples, env, cfg, runs=runs, schema=schema,
                                out_dir=out_dir)
    out = Path(out_dir)
    write_manifest(out, "multirun", {"runs": runs, "sac": cfg.to_dict()},
                   [Path(samples_path), Path(env_path)],
                   [out / "reward_band.csv", out / "stability.json"])
    click.echo(f"band early {study.early_band:.4f} late {study.late_band:.4f} "
               f"narrowed={study.late_band < study.early_band}")


# ---------------------------------------------------------------------------
# Reporting and service
# ---------------------------------------------------------------------------

@cli.command("report")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              help="Figure directory [default: RUN_DIR/figures].")
def cmd_report(run_dir, out_dir):
    """Render figures for whatever artifacts a run directory holds."""
    from .report import render_run_report
    written = render_run_report(run_dir, out_dir)
    for path in written:
        click.echo(f"wrote {path}")


@cli.command("serve")
@click.option("--artifacts", "artifacts_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8100, show_default=True)
def cmd_serve(artifacts_dir, host, port):
    """Serve recommendations over HTTP from trained artifacts."""
    import uvicorn

    from .service import create_app
    app = create_app(artifacts_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

@cli.command("pipeline")
@click.option("--raw", "raw_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True,
              help="Root seed; each stage gets a spawned child seed.")
@click.option("--k", type=int, help="Fixed cluster count (skips the scan).")
@click.option("--k-min", default=2, show_default=True)
@click.option("--k-max", default=6, show_default=True)
@click.option("--budget", default=DEFAULT_BUDGET, show_default=True)
@click.option("--env-epochs", default=300, show_default=True)
@click.option("--env-batch-size", default=64, show_default=True)
@click.option("--alpha", default=0.2, show_default=True)
@click.option("--iterations", default=1000, show_default=True)
@click.option("--batch-size", default=256, show_default=True)
@click.option("--runs", default=0, show_default=True,
              help="Repeated-run study size; 0 skips it.")
@click.option("--ingest-config", "ingest_config_path", type=click.Path())
@click.option("--figures", is_flag=True, help="Render figures at the end.")
def cmd_pipeline(raw_dir, schema_path, out_dir, seed, k, k_min, k_max, budget,
                 env_epochs, env_batch_size, alpha, iterations, batch_size,
                 runs, ingest_config_path, figures):
    """Run ingest -> cluster -> aggregate -> env model -> policy end to end."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schema = load_schema(schema_path)
    root = np.random.SeedSequence(seed)
    seed_cluster, seed_env, seed_sac, seed_runs = (
        int(c.generate_state(1)[0]) for c in root.spawn(4))

    config = IngestConfig.from_file(ingest_config_path) if ingest_config_path \
        else IngestConfig()
    records, ingest_audit = run_ingest(raw_dir, schema, config)
    clean_path = out / "clean.csv"
    records.write_csv(clean_path)
    _write_json(out / "ingest_audit.json", ingest_audit)
    click.echo(f"[1/5] ingest: {len(records)} records")

    cfg = GowerConfig.from_records(records)
    matrix = gower_matrix(records, cfg)
    scan_doc = None
    if k is None:
        grid = range(k_min, min(k_max, matrix.n - 1) + 1)
        scan = scan_k(matrix, grid, seed=seed_cluster)
        k = scan.best_k
        scan_doc = scan.to_dict()
        lines = ["k,asw"] + [f"{kk},{asw!r}" for kk, asw in scan.entries]
        (out / "silhouette_scan.csv").write_text("\n".join(lines) + "\n")
    clustering = pam(matrix, k, seed=seed_cluster)
    asw, _ = silhouette(matrix, clustering)
    kept, filter_audit = filter_clusters(clustering, records)
    _write_json(out / "clustering.json",
                {"format": "banditrx-clustering", "version": 1,
                 "gower": cfg.to_dict(), "clustering": clustering.to_dict(),
                 "asw": asw, "kept_clusters": kept, "filter": filter_audit,
                 "scan": scan_doc})
    click.echo(f"[2/5] cluster: k={k} asw={asw:.4f} kept={len(kept)}")

    segmented = [segment_cluster(matrix, records, clustering.members(c), c)
                 for c in kept]
    if not segmented:
        raise DataQualityError("no clusters survived filtering; nothing to aggregate")
    counts = allocate_counts([sc.size for sc in segmented], budget)
    samples, agg_audit = build_sample_set(segmented, counts, records)
    samples_path = out / "samples.csv"
    write_samples(samples, schema, samples_path)
    _write_json(out / "aggregate_audit.json", agg_audit)
    click.echo(f"[3/5] aggregate: {len(samples)} samples")

    env, metrics = train_env(samples, schema, epochs=env_epochs,
                             batch_size=env_batch_size, seed=seed_env)
    save_env(env, out / "env.json")
    (out / "env_metrics.csv").write_text(metrics_to_csv(metrics))
    best = min(metrics, key=lambda m: m.val_mse)
    click.echo(f"[4/5] env model: best val MSE {best.val_mse:.6g} "
               f"at epoch {best.epoch}")

    sac = SacConfig(alpha=alpha, batch_size=batch_size, iterations=iterations,
                    seed=seed_sac)
    policy, critics, history = train(samples, env, sac, schema=schema)
    save_policy(policy, out / "policy.json")
    save_critics(critics, out / "critics.json")
    history.write_csv(out / "history.csv")
    (out / "schema.json").write_text(json.dumps(schema.to_dict(), indent=2))
    tail = max(1, len(history) // 10)
    final = sum(history.mean_reward[-tail:]) / tail
    click.echo(f"[5/5] policy: final-10% mean reward {final:.4f}")

    if runs > 0:
        study = run_stability_study(samples, env, replace(sac, seed=seed_runs),
                                    runs=runs, out_dir=out)
        click.echo(f"      band: early {study.early_band:.4f} "
                   f"late {study.late_band:.4f}")

    outputs = sorted(p for p in out.iterdir() if p.is_file()
                     and p.name != "manifest.json")
    write_manifest(out, "pipeline",
                   {"seed": seed, "k": k, "budget": budget,
                    "env_epochs": env_epochs, "alpha": alpha,
                    "iterations": iterations, "batch_size": batch_size,
                    "runs": runs},
                   sorted(Path(raw_dir).glob("*.csv")) + [Path(schema_path)],
                   outputs)
    if figures:
        from .report import render_run_report
        for path in render_run_report(out):
            click.echo(f"wrote {path}")
    click.echo(f"manifest: {out / 'manifest.json'}")


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except BanditrxError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(getattr(e, "exit_code", 1))


if __name__ == "__main__":
    main()
