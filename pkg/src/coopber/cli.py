"""Command-line entry point: ``coopber run | validate | list-experiments``."""

from __future__ import annotations

import argparse
import os
import sys


from .config import ConfigError, diagnostics, load_config
from .numerics import DomainError
from .oracle import BudgetExceeded
from .sampling import ConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="coopber",
                                description="BER analysis and simulation of relayed and "
                                            "network-coded links")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment and write its CSV")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", help="directory for the CSV (overrides the config's directory)")
    run.add_argument("--threads", type=int, default=1)
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    sub.add_parser("list-experiments", help="list experiments and methods")
    return p


def _output_path(cfg, out_dir):
    if out_dir:
        return os.path.join(out_dir, os.path.basename(cfg.output_path))
    return cfg.output_path


def cmd_run(args) -> int:
    from .experiments import checks, run_experiment, to_csv

    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        cfg.seed = args.seed
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    for msg in diagnostics(cfg):
        print(f"warning: {msg}", file=sys.stderr)
    rows = run_experiment(cfg, threads=args.threads)
    path = _output_path(cfg, args.out)
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(rows))
    print(f"{cfg.experiment}: {len(rows)} rows written to {path}")
    short = [r for r in rows if r.budget_exhausted]
    for r in short:
        src = "" if r.source is None else f" source={r.source}"
        print(f"  budget exhausted: method={r.method}{src} snr_db={r.snr_db:g} "
              f"errors={r.errors} trials={r.trials} (fewer than {cfg.stopping.min_errors} errors)")
    for name, ok, detail in checks(cfg, rows):
        print(f"  check {'PASS' if ok else 'FAIL'}: {name}: {detail}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    diags = diagnostics(cfg)
    for msg in diags:
        print(f"warning: {msg}")
    print(f"{args.config}: ok ({cfg.experiment}, {len(cfg.snr_db_grid)} grid points, "
          f"{len(diags)} diagnostics)")
    return EXIT_OK


def cmd_list(_args) -> int:
    from .experiments import DEFAULT_METHODS, EXPERIMENT_HELP, METHODS

    for name, text in EXPERIMENT_HELP.items():
        print(f"{name:8s} {text}")
        if DEFAULT_METHODS[name]:
            print(f"{'':8s} default methods: {', '.join(DEFAULT_METHODS[name])}")
    print("\nmethods:")
    for name, m in METHODS.items():
        print(f"  {name:20s} [{m.kind}] {m.description}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "list-experiments": cmd_list}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BudgetExceeded, ConvergenceError, DomainError, FloatingPointError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
