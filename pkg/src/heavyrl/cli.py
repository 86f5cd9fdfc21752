"""Command line entry point: ``heavyrl {bandit,mdp,regress-check,selftest,report}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import checks
from . import config as cf
from . import harness

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _seed_list(text: str) -> list:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise cf.ConfigError(f"expected a comma-separated list of integers, got {text!r}",
                             "--seeds") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heavyrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name in ("bandit", "mdp"):
        s = sub.add_parser(name, help=f"run a {name} experiment from a config file")
        s.add_argument("--config", required=True)
        s.add_argument("--out", help="output directory (overrides output_dir)")
        s.add_argument("--seeds", help="comma-separated seeds (overrides the config)")
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--bonus-scale", type=float, dest="bonus_scale")

    s = sub.add_parser("regress-check", help="concentration and perturbation suites")
    s.add_argument("--config", help="optional regression-check config")
    s.add_argument("--out", default=None)
    s.add_argument("--seeds", help="master seed(s); the first one is used")
    s.add_argument("--runs", type=int, default=50)

    sub.add_parser("selftest", help="run the built-in example checks")

    s = sub.add_parser("report", help="render regret figures from stored CSVs")
    s.add_argument("--out", required=True, help="experiment output directory")
    return p


def _cmd_experiment(args, kind: str) -> int:
    cfg = cf.load_config(args.config)
    if cfg.kind != kind:
        raise cf.ConfigError(f"config is for {cfg.kind!r}, not {kind!r}", "kind")
    seeds = _seed_list(args.seeds) if args.seeds else None
    if args.jobs < 1:
        raise cf.ConfigError("must be at least 1", "--jobs")
    if args.bonus_scale is not None and args.bonus_scale < 0:
        raise cf.ConfigError("must be non-negative", "--bonus-scale")
    result = harness.run_experiment(cfg, args.out, jobs=args.jobs,
                                    bonus_override=args.bonus_scale, seeds=seeds)
    for algo_index, (bonus, final) in sorted(result["selected"].items()):
        label = harness._label(cfg.algorithms[algo_index])
        extra = "" if bonus is None else f" (bonus_scale={bonus:g})"
        print(f"{label}{extra}: mean final regret {final:.6g}")
    if result["figure"]:
        print(f"figure: {result['figure']}")
    for rec in result["failed"]:
        print(f"FAILED {rec.run_id}: {rec.error}", file=sys.stderr)
    return EXIT_FAILED if result["failed"] else EXIT_OK


def _cmd_regress_check(args) -> int:
    trial_cfg = checks.RegressionTrialConfig()
    seed = 0
    if args.config:
        cfg = cf.load_config(args.config)
        if cfg.kind != "regression-check":
            raise cf.ConfigError(f"config is for {cfg.kind!r}, not 'regression-check'", "kind")
        env = dict(cfg.environment)
        try:
            trial_cfg = checks.RegressionTrialConfig(**env)
        except TypeError as exc:
            raise cf.ConfigError(str(exc), "environment") from exc
        seed = cfg.seeds[0]
    if args.seeds:
        seed = _seed_list(args.seeds)[0]
    conc = checks.concentration_suite(args.runs, seed, trial_cfg)
    pert = checks.perturbation_suite(args.runs, seed)
    ok_c = conc["frequency"] >= 0.85
    ok_p = pert["frequency"] == 1.0
    print(f"{'PASS' if ok_c else 'FAIL'} concentration: event held in "
          f"{conc['frequency']:.0%} of {conc['runs']} runs (worst ratio {conc['worst_ratio']:.3g})")
    print(f"{'PASS' if ok_p else 'FAIL'} perturbation: bound held in "
          f"{pert['frequency']:.0%} of {pert['trials']} trials (max ratio {pert['max_ratio']:.3g})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "regress_check.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["suite", "n", "frequency", "worst_ratio"])
            w.writerow(["concentration", conc["runs"], repr(conc["frequency"]),
                        repr(conc["worst_ratio"])])
            w.writerow(["perturbation", pert["trials"], repr(pert["frequency"]),
                        repr(pert["max_ratio"])])
    return EXIT_OK if ok_c and ok_p else EXIT_FAILED


def _cmd_selftest(args) -> int:
    results = checks.selftest()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAILED


def _cmd_report(args) -> int:
    path = harness.render_report(args.out)
    print(f"figure: {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("bandit", "mdp"):
            return _cmd_experiment(args, args.command)
        if args.command == "regress-check":
            return _cmd_regress_check(args)
        if args.command == "selftest":
            return _cmd_selftest(args)
        return _cmd_report(args)
    except cf.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
