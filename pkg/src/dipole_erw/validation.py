"""Deterministic self-checks behind ``erw validate``.

Each suite returns a list of ``CheckReport``.  Generators are obtained
through ``build_generators`` in this module so a test can substitute
perturbed matrices and watch the suites fail.
"""

from __future__ import annotations

import itertools

import numpy as np

from .ensemble import CheckReport
from .errors import DiagonalizationCheckFailed
from .lattice import builtin_lattice, derive_memory_params
from .moments import (
    conditional_step_mean,
    count_covariance_recursion,
    covariance_functionals,
    expected_count_vector,
    expected_position,
    second_moment_recursion,
)
from .oracle import exact_law, exact_moments_from_law, history_simulator_law, martingale_drift
from .urn import block_forms, build_generators, build_spectral_basis, expected_diagonal

TEST_LATTICES = ("two_step_line", "hexagonal")
PQ_GRID = tuple(itertools.product((0.2, 0.5, 0.9), repeat=2))
SUITES = ("oracle", "spectral", "martingale", "cross_engine")


def _cases():
    for name in TEST_LATTICES:
        steps = builtin_lattice(name)
        for p, q in PQ_GRID:
            yield name, steps, derive_memory_params(p, q, steps.m)


def _label(name, params):
    return f"{name} p={params.p} q={params.q}"


def oracle_suite(tv_tol=1e-12, moment_tol=1e-10, history_n=6, moment_n=8) -> list[CheckReport]:
    reports = []
    for name, steps, params in _cases():
        gens = build_generators(params)
        tv = max(
            exact_law(n, steps, params, gens=gens).total_variation(history_simulator_law(n, steps, params))
            for n in range(1, history_n + 1)
        )
        reports.append(CheckReport(f"oracle_tv {_label(name, params)}", tv < tv_tol, tv, 0.0, tv_tol))

        trace = second_moment_recursion(moment_n, steps, params)
        err_stu = err_counts = err_pos = 0.0
        for n in range(1, moment_n + 1):
            em = exact_moments_from_law(exact_law(n, steps, params, gens=gens), steps)
            err_stu = max(err_stu, abs(em.s - trace.s[n]), abs(em.t - trace.t[n]), abs(em.u - trace.u[n]))
            err_counts = max(err_counts, float(np.max(np.abs(em.mean_counts - expected_count_vector(n, steps.m)))))
            err_pos = max(err_pos, float(np.max(np.abs(em.mean_position - expected_position(n, steps)))))
        reports.append(
            CheckReport(f"oracle_moments {_label(name, params)}", err_stu < moment_tol, err_stu, 0.0, moment_tol)
        )
        reports.append(
            CheckReport(
                f"oracle_counts {_label(name, params)}",
                err_counts < 1e-12 and err_pos < 1e-12,
                {"counts": err_counts, "position": err_pos},
                0.0,
                1e-12,
            )
        )
    return reports


def spectral_suite(diag_tol=1e-12, eig_tol=1e-10) -> list[CheckReport]:
    reports = []
    for name, steps, params in _cases():
        gens = build_generators(params)
        label = _label(name, params)
        try:
            basis = build_spectral_basis(params, gens)
        except DiagonalizationCheckFailed as exc:
            reports.append(CheckReport(f"spectral_basis {label}", False, str(exc), "diagonal", diag_tol))
            continue
        P = basis.P
        want_odd, want_even = block_forms(params)
        err_blocks = max(
            float(np.max(np.abs(P.T @ gens.H_odd @ P - want_odd))),
            float(np.max(np.abs(P.T @ gens.H_even @ P - want_even))),
        )
        err_cols = max(
            float(np.max(np.abs(M.sum(axis=0) - 1.0))) for M in (gens.H_odd, gens.H_even, gens.H)
        )
        eig = np.sort_complex(np.linalg.eigvals(gens.H))
        want = np.sort_complex(expected_diagonal(params).astype(complex))
        err_eig = float(np.max(np.abs(eig - want)))
        ok = err_blocks < diag_tol and err_cols < 1e-14 and err_eig < eig_tol
        reports.append(
            CheckReport(
                f"spectral {label}",
                ok,
                {"block_forms": err_blocks, "column_sums": err_cols, "eigenvalues": err_eig},
                {"block_forms": 0.0, "column_sums": 0.0, "eigenvalues": expected_diagonal(params)},
                {"block_forms": diag_tol, "column_sums": 1e-14, "eigenvalues": eig_tol},
            )
        )
    return reports


def martingale_suite(tol=1e-12, n_range=range(2, 7)) -> list[CheckReport]:
    reports = []
    for name, steps, params in _cases():
        gens = build_generators(params)
        worst_drift = worst_mean = 0.0
        for n in n_range:
            for y in exact_law(n, steps, params, gens=gens).table:
                worst_drift = max(worst_drift, float(np.max(np.abs(martingale_drift(y, n, steps, params, gens)))))
                law = gens.for_step(n + 1) @ np.asarray(y, dtype=float) / n
                mean = conditional_step_mean(y, n, steps, params)
                worst_mean = max(worst_mean, float(np.max(np.abs(steps.matrix @ law - mean))))
        reports.append(
            CheckReport(
                f"martingale_drift {_label(name, params)}",
                worst_drift < tol and worst_mean < tol,
                {"drift": worst_drift, "conditional_mean": worst_mean},
                0.0,
                tol,
            )
        )
    return reports


def cross_engine_suite(n_max=2000, rel_tol=1e-9) -> list[CheckReport]:
    reports = []
    for name, steps, params in _cases():
        trace = second_moment_recursion(n_max, steps, params)
        s, t, u = covariance_functionals(count_covariance_recursion(n_max, steps, params), steps)
        scale = np.maximum(np.maximum(trace.s[1:], trace.t[1:]), 1e-300)
        err = max(
            float(np.max(np.abs(s[1:] - trace.s[1:]) / scale)),
            float(np.max(np.abs(t[1:] - trace.t[1:]) / scale)),
            float(np.max(np.abs(u[1:] - trace.u[1:]) / scale)),
        )
        reports.append(CheckReport(f"cross_engine {_label(name, params)}", err < rel_tol, err, 0.0, rel_tol))
    return reports


_SUITE_FUNCS = {
    "oracle": oracle_suite,
    "spectral": spectral_suite,
    "martingale": martingale_suite,
    "cross_engine": cross_engine_suite,
}


def run_validation(scopes=None) -> list[CheckReport]:
    scopes = SUITES if not scopes else scopes
    unknown = [s for s in scopes if s not in _SUITE_FUNCS]
    if unknown:
        raise ValueError(f"unknown validation scope(s) {unknown}; choose from {', '.join(SUITES)}")
    reports = []
    for s in scopes:
        reports.extend(_SUITE_FUNCS[s]())
    return reports
