"""Command-line entry point.

Exit codes: 0 success, 1 a verification check failed, 2 invalid
configuration or arguments, 3 numeric failure during a run, 4 network
generation failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import GenerationFailure, InvalidArgument, NumericFailure
from .experiments import run_field_experiment, run_localization_experiment
from .metrics import export_csv
from .verify import SUITES, run_suite

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_GENERATION = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser():
    parser = _Parser(prog="proxopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config_path", nargs="?", help="config file (same as --config)")
    run.add_argument("--config", dest="config_opt")
    run.add_argument("--seed", type=int)
    run.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    run.add_argument("--methods", help="comma-separated method names")
    run.add_argument("--out", default="out", help="output directory (PROXOPT_OUT overrides)")
    run.add_argument("--dump-state", action="store_true",
                     help="write every iterate and multiplier per run")
    run.add_argument("--paper-lmmse-formula", action="store_true", default=None,
                     help="also evaluate the printed single-slot LMMSE expression")
    run.add_argument("--monitor-node", help="center, mean or a node index")
    run.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                     help="override one config value (repeatable)")

    ver = sub.add_parser("verify", help="run a built-in property suite")
    ver.add_argument("suite")
    ver.add_argument("--seed", type=int, default=1)
    return parser


def _write_state(path, traj):
    T = len(traj.x)
    rows = np.hstack([np.arange(T)[:, None], traj.x.reshape(T, -1), traj.lam.reshape(T, -1)])
    nx, nl = traj.x[0].size, traj.lam.shape[1]
    header = ",".join(["t"] + [f"x{k}" for k in range(nx)] + [f"lam{k}" for k in range(nl)])
    np.savetxt(path, rows, delimiter=",", fmt="%.17g", header=header, comments="")


def _write_reference(path, extras):
    keys = [k for k in ("x_true", "x_ref", "x_ref_paper") if k in extras]
    n_runs, n = extras["x_ref"].shape
    with open(path, "w") as fh:
        fh.write(",".join(["run", "node"] + keys) + "\n")
        for r in range(n_runs):
            for i in range(n):
                fh.write(",".join([str(r), str(i)] + ["%.17g" % extras[k][r, i] for k in keys]) + "\n")


def cmd_run(args) -> int:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects SECTION.KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_CONFIG
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    path = args.config_opt or args.config_path
    if path is None:
        print("error: a config file is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(path, overrides=overrides, seed=args.seed, methods=args.methods,
                          monitor=args.monitor_node, paper_lmmse_formula=args.paper_lmmse_formula)
        scenario = cfg.build_scenario()
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(os.environ.get("PROXOPT_OUT") or args.out)
    try:
        if cfg.scenario == "field":
            result = run_field_experiment(scenario, cfg.seed, cfg.methods, args.jobs, cfg.monitor,
                                          cfg.paper_lmmse_formula, args.dump_state)
        else:
            result = run_localization_experiment(scenario, cfg.seed, cfg.methods, args.jobs,
                                                 cfg.monitor, args.dump_state)
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GenerationFailure as exc:
        print(f"network generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        (out / "runs").mkdir(parents=True, exist_ok=True)
        (out / "manifest.ini").write_text(cfg.to_ini())
        for m in result.methods:
            export_csv(result.mean(m), out / f"{m}.csv")
            for r, series in enumerate(result.runs[m]):
                export_csv(series, out / "runs" / f"{m}_run{r:03d}.csv")
        if cfg.scenario == "field":
            _write_reference(out / "reference.csv", result.extras)
        if args.dump_state:
            (out / "state").mkdir(exist_ok=True)
            for m in result.methods:
                for r, traj in enumerate(result.trajectories[m]):
                    _write_state(out / "state" / f"{m}_run{r:03d}.csv", traj)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {len(result.methods)} method(s) x {len(result.runs[result.methods[0]])} run(s) to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        print(f"error: unknown suite {args.suite!r}; choose from {', '.join(SUITES)}",
              file=sys.stderr)
        return EXIT_CONFIG
    checks = run_suite(args.suite, args.seed)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name.ljust(width)}  {c.detail}")
    n_pass = sum(c.passed for c in checks)
    print(f"{args.suite}: {n_pass}/{len(checks)} passed")
    return EXIT_OK if n_pass == len(checks) else EXIT_CHECK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
