"""Command-line entry point ``risk``.

    risk run <config> [overrides] [--out PATH] [--timings]
    risk converge <config> --budgets 10000,100000 [--target cond_excess]
    risk find-tau <config> --prob 0.05[,0.001]
    risk selftest

Exit status: 0 on success, 2 on configuration errors, 3 on numerical
failure (including any failed row of a comparison table).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, DomainError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _ints(text):
    try:
        vals = [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return vals


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _words(text):
    return [w.strip() for w in text.split(",") if w.strip()]


def _add_overrides(p):
    p.add_argument("config", help="YAML run configuration")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="MC sample size / RQMC budget")
    p.add_argument("--M", type=int, help="RQMC outer replications")
    p.add_argument("--N", type=int, help="points per RQMC replication")
    p.add_argument("--converge-M", type=int, dest="converge_M",
                   help="RQMC SIS outer replications in convergence sweeps")
    p.add_argument("--methods", type=_words)
    p.add_argument("--tau", type=_floats)
    p.add_argument("--target-prob", type=_floats, dest="target_prob")
    p.add_argument("--strata", type=_ints)
    p.add_argument("--schedule", type=_floats)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--reference-n", type=int, dest="reference_n")
    p.add_argument("--timings", action="store_true", help="append a wall_time column")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="comparison table of estimators")
    _add_overrides(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for table rows")
    p = sub.add_parser("converge", help="MC SIS vs RQMC SIS convergence sweep")
    _add_overrides(p)
    p.add_argument("--budgets", type=_ints, required=True)
    p.add_argument("--target", choices=("loss_prob", "cond_excess"), default="loss_prob")
    p.add_argument("--reference", type=float, help="skip the reference run and use this value")
    p = sub.add_parser("find-tau", help="threshold for a target loss probability")
    _add_overrides(p)
    p.add_argument("--prob", type=_floats, required=True)
    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


OVERRIDES = ("seed", "n", "M", "N", "converge_M", "methods", "tau", "target_prob", "strata",
             "schedule", "repetitions", "reference_n")


def _config(args):
    cfg, model = load_config(args.config)
    changes = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k, None) is not None}
    if "tau" in changes:
        changes["target_prob"] = None
    elif "target_prob" in changes:
        changes["tau"] = None
    for key in ("methods", "strata", "schedule", "tau", "target_prob"):
        if changes.get(key) is not None:
            changes[key] = tuple(changes[key])
    if args.out:
        changes["out"] = args.out
    return cfg.replace(**changes), model


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        from . import selftest

        return EXIT_OK if selftest.run() else EXIT_NUMERICAL
    from . import runner

    try:
        cfg, model = _config(args)
        if args.command == "run":
            table = runner.run_comparison(cfg, model, jobs=args.jobs)
        elif args.command == "converge":
            table = runner.run_convergence(cfg, model, args.budgets, target=args.target,
                                           reference=args.reference)
        else:
            table = runner.run_find_tau(cfg, model, args.prob)
    except (ConfigError, DomainError) as exc:
        print(f"risk: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"risk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _emit(table.to_csv(timings=args.timings), cfg.out)
    failed = table.failed() if args.command == "run" else []
    for row in failed:
        print(f"risk: {row['method']} at tau={row['tau']}: {row['status']}", file=sys.stderr)
    return EXIT_NUMERICAL if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
