"""Command-line entry point: ``pacbound {linreg,logistic,verify,bound}``.

Curves go to CSV, manifests and reports to JSON. Exit codes: 0 success,
1 verification failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundInputs, bounded_case_bound, optimal_alpha
from .errors import InvalidInputError, PacBoundError
from .experiments import (
    PI_DIGITS,
    LinRegConfig,
    LogisticMode,
    LogRegConfig,
    run_linreg_experiment,
    run_logistic_experiment,
)
from .suites import SUITES, run_suite

LINREG_HEADER = ["m", "bound_total", "term_empirical", "term_kl", "term_c2", "term_envelope",
                 "alpha", "sigma2", "emp_risk", "emp_risk_se", "true_risk", "true_risk_se"]

CURVE_LABELS = {
    LogisticMode.ALPHA_COMPARISON: ("alpha_half", "alpha_opt"),
    LogisticMode.INFORMED_PRIOR: ("naive", "informed"),
}


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    # repr round-trips and never depends on the locale
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def _m_values(text: str) -> list:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 2 for v in values):
        raise argparse.ArgumentTypeError("every m must be an integer >= 2")
    return values


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _probability(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {v}")
    return v


def _default_seed() -> int:
    raw = os.environ.get("PACBOUND_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"PACBOUND_SEED must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pacbound", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (fallback: $PACBOUND_SEED, then 0)")
    common.add_argument("--delta", type=_probability, default=0.05)
    common.add_argument("--out-dir", type=Path, default=Path("."))
    common.add_argument("--n-mc", type=_positive_int, default=10_000, help="posterior draws for E_Q[R_m]")

    p = sub.add_parser("linreg", parents=[common], help="linear-regression curve (affine envelope)")
    p.add_argument("--d", type=_positive_int, default=10)
    p.add_argument("--m-values", type=_m_values, default=[100, 200, 400, 800, 1600])
    p.add_argument("--step", type=_positive_int, default=8, help="alpha grid {i/step}")

    p = sub.add_parser("logistic", parents=[common], help="classification curves (bounded loss)")
    p.add_argument("--d", type=_positive_int, default=10)
    p.add_argument("--m-values", type=_m_values, default=[50, 100, 200, 400, 800])
    p.add_argument("--mode", choices=[m.value for m in LogisticMode], default=LogisticMode.ALPHA_COMPARISON.value)
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=None,
                   help="unit-norm posterior mean (default: on for alpha, off for informed)")

    p = sub.add_parser("verify", parents=[common], help="run property suites")
    p.add_argument("--suite", choices=sorted(SUITES) + ["all"], default="all")
    p.add_argument("--trials", type=_positive_int, default=50, help="dataset resamples for coverage")

    p = sub.add_parser("bound", parents=[common], help="evaluate the bounded-loss bound once")
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--kl", type=float, required=True)
    p.add_argument("--emp", type=float, required=True, help="posterior empirical risk")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=None, help="default: closed-form optimum")
    return parser


def _manifest(command: str, config: dict, seed: int, started: str, outputs: list) -> dict:
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": outputs,
    }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (Path, LogisticMode)):
        return str(o.value if isinstance(o, LogisticMode) else o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def cmd_linreg(args, seed: int) -> int:
    if args.d < 6:
        raise UsageError(f"--d must be >= 6 for the Gaussian-prior regression bound, got {args.d}")
    started = _now()
    cfg = LinRegConfig(d=args.d, m=args.m_values[0], delta=args.delta, step=args.step, seed=seed, n_mc=args.n_mc)
    curve = run_linreg_experiment(cfg, args.m_values)
    rows = [[p.m, p.bound_total, p.bound_terms["empirical"], p.bound_terms["kl"], p.bound_terms["c2"],
             p.bound_terms["envelope"], p.chosen_alpha, p.chosen_sigma2, p.emp_risk_mc.value,
             p.emp_risk_mc.std_error, p.true_risk_mc.value, p.true_risk_mc.std_error] for p in curve]
    out = args.out_dir / "linreg_curve.csv"
    _write_csv(out, LINREG_HEADER, rows)
    config = {**asdict(cfg), "m_values": args.m_values, "B": cfg.B, "C": cfg.C}
    _write_json(args.out_dir / "linreg_manifest.json", _manifest("linreg", config, seed, started, [out.name]))
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_logistic(args, seed: int) -> int:
    if args.d > len(PI_DIGITS):
        raise UsageError(f"--d must be <= {len(PI_DIGITS)}, got {args.d}")
    mode = LogisticMode(args.mode)
    if mode is LogisticMode.INFORMED_PRIOR and any(m % 2 or m < 4 for m in args.m_values):
        raise UsageError("informed priors need even m values >= 4")
    started = _now()
    cfg = LogRegConfig(d=args.d, delta=args.delta, m=args.m_values[0], seed=seed, n_mc=args.n_mc,
                       normalize=args.normalize, informed_priors=mode is LogisticMode.INFORMED_PRIOR)
    first, second = run_logistic_experiment(cfg, args.m_values, mode)
    a, b = CURVE_LABELS[mode]
    header = ["m"]
    for field in ("bound", "alpha", "sigma2", "emp_risk", "emp_risk_se", "true_risk", "true_risk_se"):
        header += [f"{field}_{a}", f"{field}_{b}"]
    rows = []
    for p, q in zip(first, second):
        row = [p.m]
        for get in (lambda c: c.bound_total, lambda c: c.chosen_alpha, lambda c: c.chosen_sigma2,
                    lambda c: c.emp_risk_mc.value, lambda c: c.emp_risk_mc.std_error,
                    lambda c: c.true_risk_mc.value, lambda c: c.true_risk_mc.std_error):
            row += [get(p), get(q)]
        rows.append(row)
    out = args.out_dir / f"logistic_{mode.value}_curve.csv"
    _write_csv(out, header, rows)
    config = {**asdict(cfg), "normalize": cfg.resolved_normalize(mode), "mode": mode.value,
              "m_values": args.m_values}
    _write_json(args.out_dir / f"logistic_{mode.value}_manifest.json",
                _manifest("logistic", config, seed, started, [out.name]))
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_verify(args, seed: int) -> int:
    started = _now()
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        kw = {"trials": args.trials, "delta": args.delta} if name == "coverage" else {}
        results.append(run_suite(name, seed, **kw))
    report = {
        "suites": [r.as_dict() for r in results],
        "passed": all(r.passed for r in results),
        "manifest": _manifest("verify", {"suite": args.suite, "trials": args.trials, "delta": args.delta},
                              seed, started, []),
    }
    _write_json(args.out_dir / "verify_report.json", report)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} ({r.seconds:.2f}s)")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failing suites: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_bound(args, seed: int) -> int:
    alpha = args.alpha if args.alpha is not None else optimal_alpha(args.kl + math.log(1 / args.delta), args.C, args.m)
    report = bounded_case_bound(BoundInputs(args.m, alpha, args.delta, args.kl), args.C, args.emp)
    json.dump(report.as_dict(), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


COMMANDS = {"linreg": cmd_linreg, "logistic": cmd_logistic, "verify": cmd_verify, "bound": cmd_bound}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:   # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        seed = args.seed if args.seed is not None else _default_seed()
        return COMMANDS[args.command](args, seed)
    except (UsageError, InvalidInputError) as exc:
        parser.print_usage(sys.stderr)
        print(f"pacbound {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except PacBoundError as exc:
        print(f"pacbound {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
