"""Command-line driver: ``erw {regime,moments,simulate,validate,spectral}``.

Exit codes: 0 success, 1 a check failed, 2 bad usage or configuration.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .dynamics import checkpoint_schedule, run_walk, trajectory_header, trajectory_rows
from .ensemble import EnsembleConfig, ensemble_header, ensemble_rows, run_ensemble
from .errors import DegenerateParams, ERWError
from .lattice import (
    BUILTIN_NAMES,
    admissible_range,
    builtin_lattice,
    classify_regime,
    derive_memory_params,
    load_lattice_file,
)
from .moments import MOMENT_HEADER, limit_constants, moment_rows, second_moment_recursion
from .urn import spectral_report
from .validation import SUITES, run_validation

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _probability(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erw", description="Elephant random walks on bipartite lattices.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, steps=False):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--lattice", choices=BUILTIN_NAMES, help="built-in lattice (default: hexagonal)")
        src.add_argument("--lattice-file", help='JSON file {"dimension": d, "odd_steps": [[...], ...]}')
        p.add_argument("--p", type=_probability, required=True, help="probability of repeating (e.g. 0.8 or 7/30)")
        p.add_argument("--q", type=_probability, required=True, help="probability of reversing")
        if steps:
            p.add_argument("--steps", type=int, required=True, help="number of steps n_max")
            p.add_argument("--out", default="-", help="CSV output path ('-' for stdout)")
            p.add_argument("--checkpoints", default="pow2", help="pow2 or linear:k")

    p = sub.add_parser("regime", help="memory parameters and regime")
    common(p)
    p.add_argument("--m", type=int, help="number of odd steps (default: taken from the lattice)")

    p = sub.add_parser("spectral", help="eigenvalues of the mean generator")
    common(p)
    p.add_argument("--m", type=int, help="number of odd steps (default: taken from the lattice)")

    p = sub.add_parser("moments", help="exact moment trace as CSV")
    common(p, steps=True)
    p.add_argument("--tolerance", type=float, default=1e-4, help="tail tolerance for the superdiffusive constant")
    p.add_argument("--asymptotics", action="store_true", help="fail (exit 2) if limit constants are unavailable")

    p = sub.add_parser("simulate", help="one walk (trajectory CSV) or an ensemble (stats CSV)")
    common(p, steps=True)
    p.add_argument("--walks", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None, help="thread count (capped by ERW_THREADS)")

    p = sub.add_parser("validate", help="run the deterministic self-check suites")
    p.add_argument("--scope", default=",".join(SUITES), help=f"comma list from {','.join(SUITES)}")
    return parser


def _steps_from(args):
    if getattr(args, "lattice_file", None):
        return load_lattice_file(args.lattice_file)
    return builtin_lattice(args.lattice or "hexagonal")


def _rows_for(n_max: int, schedule: str) -> np.ndarray:
    if schedule == "all":
        return np.arange(1, n_max + 1)
    try:
        return checkpoint_schedule(n_max, schedule)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


@contextlib.contextmanager
def _open_out(path: str):
    if path == "-":
        yield sys.stdout
    else:
        try:
            fh = open(path, "w", newline="")
        except OSError as exc:
            raise UsageError(f"cannot write {path}: {exc}") from None
        with fh:
            yield fh


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=False, default=_default))


def _summary(obj, out: str) -> None:
    # keep stdout clean for CSV when the CSV goes there
    if out == "-":
        print(json.dumps(obj, default=_default), file=sys.stderr)
    else:
        _emit(obj)


def _default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def cmd_regime(args) -> int:
    m = args.m if args.m is not None else _steps_from(args).m
    params = derive_memory_params(args.p, args.q, m)
    regime = classify_regime(params)
    _emit(
        {
            "p": params.p,
            "q": params.q,
            "m": params.m,
            "alpha": params.alpha,
            "beta": params.beta,
            "gamma": params.gamma,
            "delta": params.delta,
            "regime": regime.kind,
            "degenerate_flags": sorted(regime.degenerate_flags),
            "admissible": admissible_range(params),
        }
    )
    return EXIT_OK


def cmd_spectral(args) -> int:
    m = args.m if args.m is not None else _steps_from(args).m
    _emit(spectral_report(derive_memory_params(args.p, args.q, m)))
    return EXIT_OK


def cmd_moments(args) -> int:
    if args.steps < 1:
        raise UsageError(f"--steps must be at least 1, got {args.steps}")
    steps = _steps_from(args)
    params = derive_memory_params(args.p, args.q, steps.m)
    rows = _rows_for(args.steps, args.checkpoints)
    try:
        pred = limit_constants(steps, params, tolerance=args.tolerance)
    except DegenerateParams as exc:
        if args.asymptotics:
            raise
        pred, reason = None, str(exc)
    trace = second_moment_recursion(args.steps, steps, params)
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MOMENT_HEADER)
        w.writerows(moment_rows(trace, rows))
    n = args.steps
    summary = {"n": n, "s_n": float(trace.s[n]), "t_n": float(trace.t[n]), "u_n": float(trace.u[n])}
    if pred is None:
        summary["asymptotics"] = f"unavailable: {reason}"
    else:
        summary.update(
            regime=pred.regime,
            sigma2=pred.sigma2,
            constant=pred.constant,
            normalization=pred.normalization,
            ratio=float(trace.s[n] / pred.second_moment(n)) if n >= 2 else None,
        )
    _summary(summary, args.out)
    return EXIT_OK


def _walk_invariants(snapshots, steps) -> list[str]:
    problems = []
    m = steps.m
    for s in snapshots:
        y = np.asarray(s.counts)
        if int(y.sum()) != s.n:
            problems.append(f"n={s.n}: counts sum to {int(y.sum())}")
        if int(y[:m].sum() - y[m:].sum()) != s.n % 2:
            problems.append(f"n={s.n}: odd/even count balance broken")
        S = steps.matrix @ y
        T = steps.odd.T @ (y[:m] + y[m:])
        scale = 1e-9 * max(1.0, s.n * float(np.max(np.abs(steps.odd))))
        if np.max(np.abs(S - s.position)) > scale or np.max(np.abs(T - s.auxiliary)) > scale:
            problems.append(f"n={s.n}: position/auxiliary disagree with counts")
    return problems


def cmd_simulate(args) -> int:
    if args.steps < 2:
        raise UsageError(f"--steps must be at least 2, got {args.steps}")
    if args.walks < 1:
        raise UsageError(f"--walks must be at least 1, got {args.walks}")
    steps = _steps_from(args)
    params = derive_memory_params(args.p, args.q, steps.m)
    cps = _rows_for(args.steps, args.checkpoints)
    n = args.steps
    trace = second_moment_recursion(n, steps, params)
    if args.walks == 1:
        snaps = run_walk(steps, params, n, seed=args.seed, stream=0, checkpoints=cps)
        with _open_out(args.out) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(trajectory_header(steps.dimension, steps.m))
            w.writerows(trajectory_rows(snaps))
        problems = _walk_invariants(snaps, steps)
        last = snaps[-1]
        summary = {
            "walks": 1,
            "n": n,
            "seed": args.seed,
            "position": last.position,
            "martingale": last.martingale,
            "frequencies": np.asarray(last.counts) / n,
            "invariant_failures": problems,
        }
    else:
        result = run_ensemble(
            EnsembleConfig(args.walks, n, checkpoints=cps, seed=args.seed, workers=args.workers), steps, params
        )
        with _open_out(args.out) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ensemble_header(steps.dimension, steps.m))
            w.writerows(ensemble_rows(result.stats))
        st = result.stats[-1]
        problems = [
            f"n={s.n}: covariance not symmetric PSD"
            for s in result.stats
            if not np.allclose(s.cov_S, s.cov_S.T, atol=1e-10)
            or np.linalg.eigvalsh(s.cov_S).min() < -1e-10 * max(1.0, float(np.abs(s.cov_S).max()))
        ]
        summary = {
            "walks": args.walks,
            "n": n,
            "seed": args.seed,
            "e2": st.e2,
            "se_e2": st.se_e2,
            "exact_s_n": float(trace.s[n]),
            "z_score": (st.e2 - float(trace.s[n])) / st.se_e2 if st.se_e2 > 0 else None,
            "mean_S": st.mean_S,
            "expected_S": st.expected_S,
            "invariant_failures": problems,
        }
    _summary(summary, args.out)
    return EXIT_CHECK_FAILED if problems else EXIT_OK


def cmd_validate(args) -> int:
    scopes = [s.strip() for s in args.scope.split(",") if s.strip()]
    bad = [s for s in scopes if s not in SUITES]
    if bad:
        raise UsageError(f"unknown scope(s) {bad}; choose from {', '.join(SUITES)}")
    reports = run_validation(scopes)
    failed = [r for r in reports if not r.passed]
    _emit({"passed": not failed, "checks": [r.to_json() for r in reports]})
    return EXIT_CHECK_FAILED if failed else EXIT_OK


_COMMANDS = {
    "regime": cmd_regime,
    "spectral": cmd_spectral,
    "moments": cmd_moments,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (ERWError, UsageError) as exc:
        print(f"erw: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
