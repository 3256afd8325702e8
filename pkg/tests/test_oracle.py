import itertools
import math

import numba
import numpy as np
import pytest

from dipole_erw.dynamics import _choose_step
from dipole_erw.errors import TooLarge, TooShort
from dipole_erw.lattice import builtin_lattice, derive_memory_params, mean_odd_step
from dipole_erw.moments import expected_count_vector, expected_position
from dipole_erw.oracle import (
    exact_law,
    exact_moments_from_law,
    history_simulator_law,
    increment_drift,
    martingale_drift,
)

HEX = builtin_lattice("hexagonal")
LINE = builtin_lattice("two_step_line")
GRID = list(itertools.product((0.2, 0.5, 0.9), repeat=2))


def test_first_step_uniform():
    law = exact_law(1, HEX, derive_memory_params(0.8, 0.2, 3))
    assert law.table == {(1, 0, 0, 0, 0, 0): 1 / 3, (0, 1, 0, 0, 0, 0): 1 / 3, (0, 0, 1, 0, 0, 0): 1 / 3}
    hist = history_simulator_law(1, HEX, derive_memory_params(0.8, 0.2, 3))
    assert hist.table == law.table


@pytest.mark.parametrize("p, q", [(0.3, 0.7), (0.9, 0.1), (0.5, 0.5)])
def test_second_step_by_hand(p, q):
    law = exact_law(2, LINE, derive_memory_params(p, q, 2)).table
    assert law[(1, 0, 1, 0)] == pytest.approx(q / 2, abs=1e-15)
    assert law[(1, 0, 0, 1)] == pytest.approx((1 - q) / 2, abs=1e-15)
    assert law[(0, 1, 0, 1)] == pytest.approx(q / 2, abs=1e-15)
    assert law[(0, 1, 1, 0)] == pytest.approx((1 - q) / 2, abs=1e-15)


@pytest.mark.parametrize("s", [HEX, LINE])
def test_mass_and_keys(s):
    pr = derive_memory_params(0.7, 0.4, s.m)
    m = s.m
    for n in range(1, 9):
        law = exact_law(n, s, pr)
        assert abs(law.total_mass() - 1.0) < 1e-12
        for y in law.table:
            assert sum(y) == n and sum(y[:m]) - sum(y[m:]) == n % 2
        assert len(law.table) <= math.comb(n + 2 * m - 1, 2 * m - 1)


def test_state_guard():
    pr = derive_memory_params(0.5, 0.5, 3)
    with pytest.raises(TooLarge):
        exact_law(8, HEX, pr, max_states=100)
    assert len(exact_law(8, HEX, pr, max_states=225).table) == 225
    with pytest.raises(TooShort):
        exact_law(0, HEX, pr)


def test_history_guard():
    pr = derive_memory_params(0.5, 0.5, 2)
    with pytest.raises(TooLarge):
        history_simulator_law(7, LINE, pr)
    assert history_simulator_law(7, LINE, pr, max_n=7).total_mass() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("s", [HEX, LINE])
@pytest.mark.parametrize("p, q", GRID)
def test_count_sufficiency(s, p, q):
    pr = derive_memory_params(p, q, s.m)
    for n in range(1, 7):
        assert exact_law(n, s, pr).total_variation(history_simulator_law(n, s, pr)) < 1e-12


def test_full_persistence_history_alternates():
    pr = derive_memory_params(1, 1, 3)
    law = history_simulator_law(6, HEX, pr)
    # X_k = (-1)^(k-1) X_1: three odd copies and three even copies of the same direction
    expected = {}
    for i in range(3):
        y = [0] * 6
        y[i], y[3 + i] = 3, 3
        expected[tuple(y)] = pytest.approx(1 / 3, abs=1e-15)
    assert law.table == expected


@pytest.mark.parametrize("s", [HEX, LINE, builtin_lattice("distorted_hexagonal")])
def test_moments_from_law(s):
    pr = derive_memory_params(0.9, 0.2, s.m)
    for n in range(1, 9):
        em = exact_moments_from_law(exact_law(n, s, pr), s)
        assert np.max(np.abs(em.mean_counts - expected_count_vector(n, s.m))) < 1e-12
        assert np.max(np.abs(em.mean_position - expected_position(n, s))) < 1e-12
    odd = exact_moments_from_law(exact_law(7, s, pr), s).mean_position
    assert np.allclose(odd, mean_odd_step(s), atol=1e-12)


@pytest.mark.parametrize("s", [HEX, LINE])
@pytest.mark.parametrize("p, q", GRID)
def test_martingale_drift_law_level(s, p, q):
    pr = derive_memory_params(p, q, s.m)
    for n in range(2, 7):
        law = exact_law(n, s, pr)
        total = sum(prob * np.linalg.norm(martingale_drift(y, n, s, pr)) for y, prob in law.table.items())
        assert total < 1e-12
        for y in law.table:
            assert np.max(np.abs(increment_drift(y, n, s, pr))) < 1e-12


def test_drift_undefined_before_two():
    with pytest.raises(TooShort):
        martingale_drift((1, 0, 0, 0), 1, LINE, derive_memory_params(0.5, 0.5, 2))


@numba.njit(cache=True)
def _final_counts(draws, m, alpha, beta):
    walks, n = draws.shape
    out = np.zeros((walks, 2 * m), dtype=np.int64)
    for w in range(walks):
        for k in range(n):
            out[w, _choose_step(out[w], k, m, alpha, beta, draws[w, k])] += 1
    return out


@pytest.mark.slow
def test_sampler_frequencies_match_exact_law():
    pr = derive_memory_params(0.8, 0.3, 3)
    walks, n = 10**6, 6
    draws = np.random.default_rng(2024).random((walks, n))
    counts = _final_counts(draws, 3, pr.alpha, pr.beta)
    keys, freq = np.unique(counts, axis=0, return_counts=True)
    law = exact_law(n, HEX, pr)
    seen = {tuple(k): f / walks for k, f in zip(keys.tolist(), freq)}
    assert set(seen) <= set(law.table)
    for y, p in law.table.items():
        se = math.sqrt(p * (1 - p) / walks)
        assert abs(seen.get(y, 0.0) - p) <= 4 * se
