"""Experiment harness: run agent/seed grids, persist metrics, summarize.

Every (agent, seed) pair writes its own metrics CSV, shield telemetry CSV,
and checkpoint, so runs are embarrassingly parallel and reruns with the
same config are byte-identical. Wall-clock data lives only in the manifest,
never in metrics files.
"""
from __future__ import annotations

import csv
import json
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import dqn_actor, random_actor, train_dqn
from .config import (
    KNOWN_ABLATIONS,
    AblationFlags,
    ConfigError,
    ExperimentSpec,
    config_hash,
)
from .cppo import evaluate, policy_actor, train
from .nn import load_checkpoint, save_checkpoint

METRIC_COLUMNS = ("phase", "agent", "seed", "index", "mean_reward",
                  "mean_utility", "air_overhead_ms", "ric_ms", "hit_rate",
                  "lambda1", "lambda2", "shield_fallback_count")

SHIELD_COLUMNS = ("index", "fallback_count", "ric_ms")

# ladder with the escalation direction flipped (terminal rung stays last)
REVERSED_LADDER = ("light_adapt", "deploy_cached", "feat_refine",
                   "full_retrain", "noop")

_METRICS_RE = re.compile(r"^metrics_(.+)_seed(\d+)\.csv$")

_FLOAT_FIELDS = ("mean_reward", "mean_utility", "air_overhead_ms", "ric_ms",
                 "hit_rate", "lambda1", "lambda2")

_SUMMARY_METRICS = ("mean_reward", "mean_utility", "air_overhead_ms",
                    "ric_ms", "hit_rate")


def resolve_out_dir(out_dir: str) -> Path:
    """Relative output paths live under SEMSCHED_OUT_ROOT when it is set."""
    path = Path(out_dir)
    if path.is_absolute():
        return path
    root = os.environ.get("SEMSCHED_OUT_ROOT")
    return (Path(root) / path) if root else path


def label_for(agent: str, flags: AblationFlags) -> str:
    active = flags.active()
    return agent if not active else f"{agent}-{'+'.join(active)}"


def metrics_path(out_dir: Path, label: str, seed: int) -> Path:
    return out_dir / f"metrics_{label}_seed{seed}.csv"


def shield_path(out_dir: Path, label: str, seed: int) -> Path:
    return out_dir / f"shield_{label}_seed{seed}.csv"


def checkpoint_path(out_dir: Path, label: str, seed: int) -> Path:
    return out_dir / f"policy_{label}_seed{seed}.npz"


def write_metrics_csv(path: Path, label: str, seed: int, train_rows,
                      eval_rows, eval_lambdas) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in train_rows:
            writer.writerow(["train", label, seed, row["index"],
                             row["mean_reward"], row["mean_utility"],
                             row["air_overhead_ms"], row["ric_ms"],
                             row["hit_rate"], row["lambda1"], row["lambda2"],
                             row["shield_fallback_count"]])
        for row in eval_rows:
            writer.writerow(["eval", label, seed, row["index"],
                             row["mean_reward"], row["mean_utility"],
                             row["air_overhead_ms"], row["ric_ms"],
                             row["hit_rate"], eval_lambdas[0],
                             eval_lambdas[1], row["shield_fallback_count"]])


def read_metrics(path: Path) -> list[dict]:
    """Parse one metrics CSV back into typed rows; raises on malformed files."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != METRIC_COLUMNS:
            raise ValueError(f"unexpected header in {path}")
        rows = []
        for raw in reader:
            if len(raw) != len(METRIC_COLUMNS):
                raise ValueError(f"ragged row in {path}")
            row = dict(zip(METRIC_COLUMNS, raw))
            row["seed"] = int(row["seed"])
            row["index"] = int(row["index"])
            row["shield_fallback_count"] = int(row["shield_fallback_count"])
            for key in _FLOAT_FIELDS:
                row[key] = float(row[key])
            rows.append(row)
    return rows


def _effective_shield(spec: ExperimentSpec, flags: AblationFlags):
    shield_cfg = spec.shield
    if flags.reversed_shield_order:
        shield_cfg = replace(shield_cfg, fallback_order=REVERSED_LADDER)
    if flags.no_shield:
        shield_cfg = replace(shield_cfg, enabled=False)
    return shield_cfg


def run_pair(spec: ExperimentSpec, agent: str, seed: int,
             flags: AblationFlags | None = None,
             label: str | None = None) -> dict:
    """Train (or reload) one agent at one seed, evaluate it, write artifacts."""
    flags = spec.ablation if flags is None else flags
    label = label_for(agent, flags) if label is None else label
    shield_cfg = _effective_shield(spec, flags)
    shield_on = shield_cfg.enabled
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = checkpoint_path(out_dir, label, seed)

    train_rows: list[dict] = []
    eval_lambdas = (0.0, 0.0)
    if agent in ("tcppo", "ppo"):
        if spec.eval_only:
            net, meta = load_checkpoint(ckpt)
            actor = policy_actor(net)
            eval_lambdas = (float(meta.get("lambda1", 0.0)),
                            float(meta.get("lambda2", 0.0)))
        else:
            result = train(spec.env, spec.train, shield_cfg, seed,
                           agent=agent, ablation=flags)
            train_rows = result.rows
            actor = policy_actor(result.policy)
            if agent == "tcppo":
                if flags.fixed_duals or flags.no_cost_critics:
                    eval_lambdas = (float(spec.train.fixed_lambdas[0]),
                                    float(spec.train.fixed_lambdas[1]))
                else:
                    eval_lambdas = (result.duals.lam1, result.duals.lam2)
            save_checkpoint(ckpt, result.policy,
                            meta={"kind": "policy", "agent": agent,
                                  "label": label, "seed": seed,
                                  "lambda1": eval_lambdas[0],
                                  "lambda2": eval_lambdas[1]})
    elif agent == "dqn":
        if spec.eval_only:
            net, _ = load_checkpoint(ckpt)
        else:
            total_frames = spec.train.updates * spec.train.rollout_frames
            result = train_dqn(spec.env, spec.dqn, shield_cfg, seed,
                               total_frames,
                               row_every=spec.train.rollout_frames)
            train_rows = result.rows
            net = result.qnet
            save_checkpoint(ckpt, net,
                            meta={"kind": "qnet", "agent": agent,
                                  "label": label, "seed": seed,
                                  "lambda1": 0.0, "lambda2": 0.0})
        actor = dqn_actor(net, spec.env.n_ues)
        shield_on = shield_cfg.enabled and spec.dqn.shielded
    elif agent == "random":
        actor = random_actor(spec.env.n_ues)
    else:
        raise ConfigError(f"unknown agent: {agent!r}")

    eval_rows = evaluate(actor, spec.env, shield_cfg, spec.eval_episodes,
                         seed, shield_enabled=shield_on)
    path = metrics_path(out_dir, label, seed)
    write_metrics_csv(path, label, seed, train_rows, eval_rows, eval_lambdas)
    if shield_on:
        with open(shield_path(out_dir, label, seed), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SHIELD_COLUMNS)
            for row in eval_rows:
                writer.writerow([row["index"], row["shield_fallback_count"],
                                 row["ric_ms"]])
    return {"label": label, "seed": seed, "agent": agent,
            "metrics": path.name}


def _job_worker(args) -> dict:
    spec, agent, seed, flags, label = args
    started = time.perf_counter()
    try:
        row = run_pair(spec, agent, seed, flags=flags, label=label)
        row["status"] = "ok"
    except Exception as exc:  # recorded in the manifest, surfaced at the end
        row = {"label": label, "seed": seed, "agent": agent,
               "metrics": None, "status": f"failed: {exc}"}
    row["wall_clock_s"] = round(time.perf_counter() - started, 3)
    return row


def ablation_jobs(spec: ExperimentSpec, names=None) -> list[tuple]:
    """Baseline constrained agent plus one-flag-at-a-time variants."""
    if names is None:
        names = KNOWN_ABLATIONS
    for name in names:
        if name not in KNOWN_ABLATIONS:
            raise ConfigError(f"unknown ablation: {name!r}")
    jobs = []
    variants = [("tcppo", AblationFlags())]
    variants += [(f"tcppo-{name}", AblationFlags(**{name: True}))
                 for name in names]
    for label, flags in variants:
        for seed in spec.seeds:
            jobs.append((spec, "tcppo", seed, flags, label))
    return jobs


def grid_jobs(spec: ExperimentSpec) -> list[tuple]:
    return [(spec, agent, seed, spec.ablation, label_for(agent, spec.ablation))
            for agent in spec.agents for seed in spec.seeds]


def run_experiment(spec: ExperimentSpec, ablations=None) -> dict:
    """Execute the full grid (or the ablation grid) and write a manifest."""
    spec.validate()
    out_dir = resolve_out_dir(spec.out_dir)
    spec = replace(spec, out_dir=str(out_dir))
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = ablation_jobs(spec, ablations) if ablations is not None else grid_jobs(spec)
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_job_worker, jobs))
    else:
        results = [_job_worker(job) for job in jobs]

    manifest = {
        "config_hash": config_hash(spec),
        "scenario": spec.scenario,
        "eval_only": spec.eval_only,
        "eval_episodes": spec.eval_episodes,
        "seeds": list(spec.seeds),
        "labels": sorted({r["label"] for r in results}),
        "runs": sorted(results, key=lambda r: (r["label"], r["seed"])),
        "package_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    failures = [r for r in manifest["runs"] if r["status"] != "ok"]
    if failures:
        detail = "; ".join(f"{r['label']} seed {r['seed']}: {r['status']}"
                           for r in failures)
        raise RuntimeError(f"{len(failures)} runs failed ({detail})")
    return manifest


def _stats(values: np.ndarray) -> dict:
    n = values.size
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return {"mean": float(values.mean()), "se": se,
            "p95": float(np.percentile(values, 95))}


def summarize(out_dir) -> dict:
    """Aggregate every readable metrics CSV in a run directory.

    Corrupt files produce a warning entry and are skipped, so one bad run
    cannot block reporting on the rest.
    """
    out_dir = Path(out_dir)
    files = sorted(out_dir.glob("metrics_*.csv"))
    if not files:
        raise RuntimeError(f"no metrics files found in {out_dir}")

    warnings: list[str] = []
    by_label: dict[str, dict] = {}
    for path in files:
        match = _METRICS_RE.match(path.name)
        if match is None:
            warnings.append(f"skipped {path.name}: unrecognized name")
            continue
        label = match.group(1)
        try:
            rows = read_metrics(path)
        except Exception as exc:  # malformed content of any kind
            warnings.append(f"skipped {path.name}: {exc}")
            continue
        bucket = by_label.setdefault(label, {"eval": [], "train": [],
                                             "seeds": set()})
        bucket["seeds"].add(int(match.group(2)))
        for row in rows:
            bucket[row["phase"]].append(row)

    if not by_label:
        raise RuntimeError(f"no readable metrics files in {out_dir}")

    summary: dict = {"labels": {}, "warnings": warnings}
    for label in sorted(by_label):
        bucket = by_label[label]
        entry = {"seeds": sorted(bucket["seeds"]),
                 "eval_episodes": len(bucket["eval"]), "eval": {}}
        if bucket["eval"]:
            for metric in _SUMMARY_METRICS:
                vals = np.array([r[metric] for r in bucket["eval"]])
                entry["eval"][metric] = _stats(vals)
        summary["labels"][label] = entry

    with open(out_dir / "eval_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["label", "episodes"]
        for metric in _SUMMARY_METRICS:
            header += [f"{metric}_mean", f"{metric}_se", f"{metric}_p95"]
        writer.writerow(header)
        for label in sorted(by_label):
            entry = summary["labels"][label]
            if not entry["eval"]:
                continue
            row = [label, entry["eval_episodes"]]
            for metric in _SUMMARY_METRICS:
                stats = entry["eval"][metric]
                row += [stats["mean"], stats["se"], stats["p95"]]
            writer.writerow(row)

    with open(out_dir / "train_series.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "index", "mean_reward", "mean_utility",
                         "air_overhead_ms", "ric_ms", "hit_rate", "lambda1",
                         "lambda2", "shield_fallback_count"])
        for label in sorted(by_label):
            train_rows = by_label[label]["train"]
            if not train_rows:
                continue
            by_index: dict[int, list] = {}
            for row in train_rows:
                by_index.setdefault(row["index"], []).append(row)
            for index in sorted(by_index):
                group = by_index[index]
                out = [label, index]
                for key in ("mean_reward", "mean_utility", "air_overhead_ms",
                            "ric_ms", "hit_rate", "lambda1", "lambda2",
                            "shield_fallback_count"):
                    out.append(float(np.mean([r[key] for r in group])))
                writer.writerow(out)

    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists():
        try:
            with open(manifest_path) as fh:
                summary["config_hash"] = json.load(fh).get("config_hash")
        except Exception:
            warnings.append("manifest.json unreadable")

    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
