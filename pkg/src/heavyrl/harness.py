"""Seeded, parallel experiment execution with per-run CSVs, a summary and figures."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cf
from .bandit import run_bandit
from .linear_mdp import run_mdp
from .records import RunRecord, canonical_json, read_csv

log = logging.getLogger(__name__)

SUMMARY_HEADER = ["algorithm", "bonus_scale", "t", "mean_cum_regret", "std_cum_regret", "n_runs"]
MANIFEST = "manifest.json"


def deterministic_mode() -> bool:
    return os.environ.get("HEAVYRL_DETERMINISTIC", "") == "1"


# the baselines are simplified stand-ins and are labelled that way in every output
DEFAULT_LABELS = {"truncation": "truncation-simplified",
                  "median_of_means": "median_of_means-simplified"}


def _label(algo: dict) -> str:
    return str(algo.get("label", DEFAULT_LABELS.get(algo["name"], algo["name"])))


def _run_one(task):
    """Worker entry point; rebuilds everything from the plain config dict."""
    raw, algo_index, bonus, seed = task
    cfg = cf.from_dict(raw)
    algo = cfg.algorithms[algo_index]
    run_id = f"{_label(algo)}-b{bonus:g}-s{seed}" if bonus is not None else f"{_label(algo)}-s{seed}"
    if cfg.kind == "bandit":
        inst = cf.build_bandit_instance(cfg.environment)
        learner = cf.build_bandit_learner(algo, inst, cfg.horizon, bonus)
        rec = run_bandit(inst, learner, cfg.horizon, seed, run_id=run_id,
                         fingerprint=cfg.fingerprint)
    else:
        spec = cf.build_mdp_spec(cfg.environment)
        mcfg = cf.build_mdp_config(algo, bonus_scale=bonus)
        rec = run_mdp(spec, mcfg, seed, run_id=run_id, fingerprint=cfg.fingerprint)
    return algo_index, bonus, rec


def plan_tasks(cfg: cf.ExperimentConfig, bonus_override: float | None = None) -> list:
    tasks = []
    for i, algo in enumerate(cfg.algorithms):
        if bonus_override is not None:
            grid = [bonus_override]
        elif "bonus_grid" in algo:
            grid = [float(b) for b in algo["bonus_grid"]]
        else:
            grid = [None]
        for bonus in grid:
            for seed in cfg.seeds:
                tasks.append((cfg.raw, i, bonus, seed))
    return tasks


def execute(tasks: list, jobs: int = 1) -> list:
    if deterministic_mode():
        jobs = 1
    jobs = max(1, min(jobs, len(tasks)))
    if jobs == 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, tasks))


def summarize(records: list) -> dict:
    """Per-t mean and population std of cumulative regret across runs."""
    cums = np.vstack([r.cum_array() for r in records])
    return {"mean": cums.mean(axis=0), "std": cums.std(axis=0), "n": len(records),
            "runs": cums}


def run_experiment(cfg: cf.ExperimentConfig, out_dir=None, jobs: int = 1,
                   bonus_override: float | None = None, seeds: list | None = None) -> dict:
    if seeds is not None:
        cfg.seeds = cf.validate_seeds(seeds, "--seeds")
        cfg.raw["seeds"] = cfg.seeds
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = execute(plan_tasks(cfg, bonus_override), jobs)

    grouped: dict = {}
    for algo_index, bonus, rec in results:
        grouped.setdefault((algo_index, bonus), []).append(rec)
        sub = out / _label(cfg.algorithms[algo_index])
        rec.write_csv(sub / f"{rec.run_id}.csv")

    selected = {}
    grid_rows = []
    for (algo_index, bonus), recs in sorted(grouped.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
        final = float(np.mean([r.final_regret for r in recs]))
        grid_rows.append([_label(cfg.algorithms[algo_index]), bonus, final])
        best = selected.get(algo_index)
        if best is None or final < best[1]:
            selected[algo_index] = (bonus, final)

    failed = [r for _, _, r in results if r.status != "complete"]
    summary_rows = []
    curves = {}
    for algo_index, (bonus, _) in sorted(selected.items()):
        recs = sorted(grouped[(algo_index, bonus)], key=lambda r: r.seed)
        ok = [r for r in recs if r.status == "complete"]
        if not ok:
            continue
        s = summarize(ok)
        label = _label(cfg.algorithms[algo_index])
        curves[label] = s["runs"]
        for t in range(len(s["mean"])):
            summary_rows.append([label, "" if bonus is None else repr(bonus), t + 1,
                                 repr(float(s["mean"][t])), repr(float(s["std"][t])), s["n"]])

    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        w.writerows(summary_rows)
    if len(grid_rows) > len(selected):
        with (out / "bonus_grid.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["algorithm", "bonus_scale", "mean_final_regret"])
            for label, bonus, final in grid_rows:
                w.writerow([label, "" if bonus is None else repr(bonus), repr(final)])
    manifest = {
        "name": cfg.name, "kind": cfg.kind, "fingerprint": cfg.fingerprint,
        "selected": {_label(cfg.algorithms[i]): ({"bonus_scale": b} if b is not None else {})
                     for i, (b, _) in sorted(selected.items())},
        "failed": [{"run_id": r.run_id, "error": r.error} for r in failed],
        "summaries": {r.run_id: r.summary for _, _, r in results if r.summary},
    }
    (out / MANIFEST).write_text(canonical_json(manifest) + "\n")
    figure = None
    if cfg.emit_figures and curves:
        figure = render_report(out)
    return {"out": out, "records": results, "selected": selected, "failed": failed,
            "curves": curves, "figure": figure}


def render_report(out_dir) -> Path:
    """Figure of mean +- std cumulative regret from the stored summary CSV."""
    from .plotting import regret_figure

    out = Path(out_dir)
    manifest = json.loads((out / MANIFEST).read_text()) if (out / MANIFEST).exists() else {}
    name = manifest.get("name", out.name)
    kind = manifest.get("kind", "bandit")
    selected = manifest.get("selected")
    curves = {}
    for sub in sorted(p for p in out.iterdir() if p.is_dir()):
        runs = []
        wanted = None
        if selected and sub.name in selected and "bonus_scale" in selected[sub.name]:
            wanted = f"-b{selected[sub.name]['bonus_scale']:g}-"
        for path in sorted(sub.glob("*.csv")):
            if wanted and wanted not in path.name:
                continue
            rec: RunRecord = read_csv(path)
            runs.append(rec.cum_array())
        if runs:
            n = min(len(r) for r in runs)
            curves[sub.name] = np.vstack([r[:n] for r in runs])
    if not curves:
        raise FileNotFoundError(f"no run CSVs under {out}")
    xlabel = "episode" if kind == "mdp" else "round"
    return regret_figure(curves, out / name, xlabel=xlabel)
