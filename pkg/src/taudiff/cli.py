"""Command-line interface: dataset ingestion, tests, and simulations.

Exit codes: 0 = ran and did not reject, 1 = ran and rejected, 2 = usage or
data error.  All indices in human and JSON output are 1-based; the library
API underneath is 0-based.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataValidationError, TauDiffError
from .evt import (
    METHOD_GENERIC_JACK,
    TestConfig,
    TestOutcome,
    differential_entries,
    run_full_test,
    run_row_test,
)
from .kendall import KENDALL_METHODS
from .simulate import (
    MODELS,
    STRUCTURES,
    SimSpec,
    StructureSpec,
    empirical_rejection_rates,
    resolve_workers,
)
from .ustat import DataMatrix, kendall_kernel, spearman_kernel, symmetrize_kernel

_STRUCTURE_ALIASES = {
    "block": "block",
    "tri": "tridiagonal",
    "tridiagonal": "tridiagonal",
    "multi": "multidiagonal",
    "multidiagonal": "multidiagonal",
}

_GENERIC_KERNELS = ("kendall", "spearman")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _sniff_delimiter(line: str) -> str | None:
    """Pick the candidate delimiter that splits the line the most;
    None means whitespace."""
    best = None
    best_count = 0
    for cand in (",", "\t", ";"):
        count = line.count(cand)
        if count > best_count:
            best, best_count = cand, count
    return best


def parse_dataset(
    path, delimiter: str | None = None, header: bool = False
) -> tuple[DataMatrix, list[str]]:
    """Read a delimited numeric matrix: rows = samples, columns = variables.

    The delimiter is auto-detected among comma/tab/semicolon with a
    whitespace fallback unless given explicitly.  Non-numeric or non-finite
    cells are rejected with their file line and column; constant columns
    come back as warnings.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataValidationError(f"cannot read {path}: {exc}") from exc
    lines = [
        (no, line)
        for no, line in enumerate(text.splitlines(), 1)
        if line.strip()
    ]
    if header and lines:
        lines = lines[1:]
    if not lines:
        raise DataValidationError(f"{path}: no data rows")
    if delimiter is None:
        delimiter = _sniff_delimiter(lines[0][1])
    rows = []
    expected = None
    for no, line in lines:
        tokens = line.split(delimiter) if delimiter else line.split()
        row = []
        for col, token in enumerate(tokens, 1):
            token = token.strip()
            if not token:
                raise DataValidationError(
                    f"{path}, line {no}: empty field at column {col}"
                )
            try:
                value = float(token)
            except ValueError as exc:
                raise DataValidationError(
                    f"{path}, line {no}: could not parse {token!r} "
                    f"at column {col}"
                ) from exc
            if not math.isfinite(value):
                raise DataValidationError(
                    f"{path}, line {no}: non-finite value {token!r} "
                    f"at column {col}"
                )
            row.append(value)
        if expected is None:
            expected = len(row)
        elif len(row) != expected:
            raise DataValidationError(
                f"{path}, line {no}: {len(row)} fields, expected {expected}"
            )
        rows.append(row)
    arr = np.asarray(rows, dtype=np.float64)
    n, d = arr.shape
    if n < 3 or d < 3:
        raise DataValidationError(
            f"{path}: need at least 3 rows and 3 columns, got {n} x {d}"
        )
    warnings = [
        f"column {j + 1} of {path} is constant"
        for j in range(d)
        if bool(np.all(arr[:, j] == arr[0, j]))
    ]
    return DataMatrix(arr), warnings


def _alpha_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(
            f"alpha must lie strictly between 0 and 1, got {value}"
        )
    return value


def _structure_arg(text: str) -> str:
    key = text.strip().lower()
    if key not in _STRUCTURE_ALIASES:
        raise argparse.ArgumentTypeError(
            f"unknown structure {text!r}; choose from "
            f"{sorted(set(_STRUCTURE_ALIASES))}"
        )
    return _STRUCTURE_ALIASES[key]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taudiff",
        description=(
            "Two-sample equality tests for high-dimensional rank-"
            "correlation matrices, with a seeded size/power simulator."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser(
        "test",
        help="test equality of two datasets' correlation matrices",
        description=(
            "Reads two delimited numeric datasets (rows = samples, columns "
            "= variables, same columns in both) and tests equality of their "
            "rank-correlation matrices.  Exit code 1 signals rejection."
        ),
    )
    t.add_argument("--x", required=True, help="first dataset path")
    t.add_argument("--y", required=True, help="second dataset path")
    t.add_argument(
        "--method",
        choices=KENDALL_METHODS,
        default=None,
        help="variance method (default: ps)",
    )
    t.add_argument(
        "--generic-kernel",
        choices=_GENERIC_KERNELS,
        default=None,
        help=(
            "use the exact generic U-statistic engine with this kernel and "
            "Jackknife variances over the full grid (slow; mutually "
            "exclusive with --method)"
        ),
    )
    t.add_argument("--alpha", type=_alpha_arg, default=0.05)
    t.add_argument(
        "--row",
        type=int,
        default=None,
        help="test a single variable's correlations (1-based index)",
    )
    t.add_argument(
        "--top",
        type=int,
        default=10,
        help="number of differential entries to report (default 10)",
    )
    t.add_argument("--json", default=None, help="write a JSON report here")
    t.add_argument(
        "--delimiter",
        default=None,
        help="field delimiter (default: auto-detect comma/tab/semicolon, "
        "then whitespace)",
    )
    t.add_argument(
        "--header",
        action="store_true",
        help="skip the first line of each dataset",
    )
    t.add_argument(
        "--asymptotic-pseudo",
        action="store_true",
        help="use the 4/9 limit instead of the finite-sample pseudo variance",
    )
    t.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads (default: TAUDIFF_THREADS or 1); "
        "results do not depend on it",
    )
    t.set_defaults(func=cmd_test)

    s = sub.add_parser(
        "simulate",
        help="estimate empirical size or power by Monte Carlo",
        description=(
            "Runs seeded replications of the two-sample test on synthetic "
            "data and reports the rejection rate with its binomial "
            "standard error."
        ),
    )
    s.add_argument(
        "--model",
        choices=["1", "2", "3", *MODELS],
        default="1",
        help="1/normal, 2/t (3 df), 3/cauchy margins",
    )
    s.add_argument(
        "--structure",
        type=_structure_arg,
        default="block",
        help=f"correlation structure: {', '.join(STRUCTURES)} "
        "(tri/multi accepted)",
    )
    s.add_argument("--d", type=int, required=True, help="number of variables")
    s.add_argument("--n1", type=int, required=True, help="first sample size")
    s.add_argument(
        "--n2",
        type=int,
        default=None,
        help="second sample size (default: n1)",
    )
    s.add_argument(
        "--zeta",
        type=float,
        default=0.0,
        help="perturbation magnitude scale; 0 simulates the null",
    )
    s.add_argument(
        "--method",
        choices=[*KENDALL_METHODS, "all"],
        default="ps",
    )
    s.add_argument("--alpha", type=_alpha_arg, default=0.05)
    s.add_argument("--reps", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", default=None, help="write a JSON report here")
    s.add_argument(
        "--rep-log",
        default=None,
        help="write one JSON line per (replication, method) here",
    )
    s.add_argument(
        "--asymptotic-pseudo",
        action="store_true",
        help="use the 4/9 limit instead of the finite-sample pseudo variance",
    )
    s.add_argument("--threads", type=int, default=None)
    s.set_defaults(func=cmd_simulate)
    return parser


def _test_report(
    outcome: TestOutcome, entries, warnings: list[str], runtime_ms: float
) -> dict:
    return {
        "method": outcome.method,
        "variant": outcome.variant,
        "row": None if outcome.row is None else outcome.row + 1,
        "alpha": outcome.alpha,
        "n1": outcome.n1,
        "n2": outcome.n2,
        "d": outcome.dim,
        "statistic": outcome.statistic,
        "critical_value": outcome.critical_value,
        "p_value": outcome.p_value,
        "reject": outcome.reject,
        "argmax": [outcome.argmax[0] + 1, outcome.argmax[1] + 1],
        "centered_x": outcome.x_centered,
        "top_entries": [
            {
                "i": e.i + 1,
                "j": e.j + 1,
                "m_ij": e.m_ij,
                "p_marginal": e.p_marginal,
            }
            for e in entries
        ],
        "warnings": list(warnings) + list(outcome.warnings),
        "runtime_ms": runtime_ms,
    }


def _print_test(report: dict) -> None:
    if report["variant"] != "full":
        scope = f"row {report['row']}"
    elif report["method"] == "generic-jack":
        scope = "full matrix (d x d kernel grid)"
    else:
        scope = "full matrix (upper triangle)"
    print("two-sample rank-correlation matrix equality test")
    print(
        f"  data: n1 = {report['n1']}, n2 = {report['n2']}, "
        f"d = {report['d']} variables; scope: {scope}"
    )
    print(f"  method: {report['method']}   alpha: {_fmt(report['alpha'])}")
    print(f"  statistic       M = {_fmt(report['statistic'])}")
    print(f"  critical value    = {_fmt(report['critical_value'])}")
    print(f"  p-value           = {_fmt(report['p_value'])}")
    decision = "REJECT equality" if report["reject"] else "no rejection"
    print(f"  decision          = {decision}")
    i, j = report["argmax"]
    print(f"  largest entry     = ({i}, {j})")
    if report["top_entries"]:
        print(
            "  top differential entries "
            "(marginal p-values, no multiplicity adjustment):"
        )
        print("      i     j        M_ij    p_marginal")
        for e in report["top_entries"]:
            print(
                f"    {e['i']:>3}   {e['j']:>3}  {e['m_ij']:>10.6g}"
                f"    {e['p_marginal']:.6g}"
            )
    for w in report["warnings"]:
        print(f"  warning: {w}")


def cmd_test(args) -> int:
    t0 = time.perf_counter()
    if args.generic_kernel is not None and args.method is not None:
        raise DataValidationError(
            "--method and --generic-kernel are mutually exclusive"
        )
    if args.generic_kernel is not None:
        kernel = (
            kendall_kernel()
            if args.generic_kernel == "kendall"
            else symmetrize_kernel(spearman_kernel())
        )
        config = TestConfig(
            method=METHOD_GENERIC_JACK,
            alpha=args.alpha,
            kernel=kernel,
            workers=resolve_workers(args.threads),
        )
    else:
        config = TestConfig(
            method=args.method or "ps",
            alpha=args.alpha,
            pseudo_asymptotic=args.asymptotic_pseudo,
            workers=resolve_workers(args.threads),
        )
    data_x, warn_x = parse_dataset(args.x, args.delimiter, args.header)
    data_y, warn_y = parse_dataset(args.y, args.delimiter, args.header)
    if args.row is not None:
        if not 1 <= args.row <= data_x.d:
            raise DataValidationError(
                f"--row must lie in 1..{data_x.d}, got {args.row}"
            )
        outcome = run_row_test(data_x, data_y, args.row - 1, config)
    else:
        outcome = run_full_test(data_x, data_y, config)
    if args.top < 0:
        raise DataValidationError(f"--top must be >= 0, got {args.top}")
    entries = differential_entries(outcome)[: args.top]
    runtime_ms = (time.perf_counter() - t0) * 1000.0
    report = _test_report(outcome, entries, warn_x + warn_y, runtime_ms)
    _print_test(report)
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2) + "\n")
    return 1 if outcome.reject else 0


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    methods = KENDALL_METHODS if args.method == "all" else (args.method,)
    spec = SimSpec(
        model=args.model,
        structure=StructureSpec(kind=args.structure, d=args.d),
        n1=args.n1,
        n2=args.n2 if args.n2 is not None else args.n1,
        zeta=args.zeta,
        method=methods[0],
        alpha=args.alpha,
        reps=args.reps,
        seed=args.seed,
        pseudo_asymptotic=args.asymptotic_pseudo,
    )
    result = empirical_rejection_rates(
        spec, methods=methods, workers=resolve_workers(args.threads)
    )
    runtime_ms = (time.perf_counter() - t0) * 1000.0
    print(
        f"simulation: model {spec.model}, structure {spec.structure.kind}, "
        f"d = {spec.structure.d}, n1 = {spec.n1}, n2 = {spec.n2}, "
        f"zeta = {_fmt(spec.zeta)}, alpha = {_fmt(spec.alpha)}, "
        f"{spec.reps} reps, seed {spec.seed}"
    )
    for m in result.methods:
        print(
            f"  {m:<5} rejection rate = {result.rates[m]:.4f} "
            f"+/- {result.stderr[m]:.4f} "
            f"({result.reps_completed} replications)"
        )
    for w in result.warnings:
        print(f"  warning: {w}")
    report = {
        "spec": spec.to_dict(),
        "methods": list(result.methods),
        "rates": result.rates,
        "stderr": result.stderr,
        "reps_completed": result.reps_completed,
        "failures": [[rep, msg] for rep, msg in result.failures],
        "seed": spec.seed,
        "runtime_ms": runtime_ms,
        "warnings": list(result.warnings),
    }
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2) + "\n")
    if args.rep_log:
        with open(args.rep_log, "w") as fh:
            for r in result.records:
                fh.write(
                    json.dumps(
                        {
                            "rep": r.rep,
                            "method": r.method,
                            "reject": r.reject,
                            "statistic": r.statistic,
                            "p_value": r.p_value,
                        }
                    )
                    + "\n"
                )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code in (0, None):
            return 0
        return 2
    try:
        return args.func(args)
    except TauDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
