import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dipole_erw.errors import (
    DimensionMismatch,
    DuplicateVector,
    EmptySet,
    LatticeFileError,
    OutOfRange,
    OverlapViolation,
    UnknownName,
    ZeroVector,
)
from dipole_erw.lattice import (
    BUILTIN_NAMES,
    CRITICAL,
    DELTA_IS_ONE,
    DIFFUSIVE,
    GAMMA_IS_ONE,
    SUPERDIFFUSIVE,
    MemoryParams,
    admissible_range,
    builtin_lattice,
    classify_regime,
    derive_memory_params,
    mean_odd_step,
    parse_lattice_json,
    validate_step_set,
)

HEX = [(1, 0), (-0.5, math.sqrt(3) / 2), (-0.5, -math.sqrt(3) / 2)]


def test_hexagonal_is_valid():
    s = validate_step_set(HEX)
    assert (s.m, s.dimension) == (3, 2)
    assert np.allclose(s.vectors[3:], -s.vectors[:3])


def test_square_lattice_rejected():
    with pytest.raises(OverlapViolation):
        validate_step_set([(1, 0), (-1, 0), (0, 1), (0, -1)])


@pytest.mark.parametrize(
    "raw, err",
    [
        ([(1, 0)], EmptySet),
        ([], EmptySet),
        ([(1, 0), (0, 0)], ZeroVector),
        ([(1, 0), (1, 0), (0, 1)], DuplicateVector),
        ([(1, 0), (0, 1, 2)], DimensionMismatch),
        ([(1.0,), (-1.0 + 1e-13,)], OverlapViolation),
    ],
)
def test_validation_errors(raw, err):
    with pytest.raises(err):
        validate_step_set(raw)


def test_near_duplicates_beyond_tolerance_accepted():
    s = validate_step_set([(1.0,), (1.0 + 1e-9,)])
    assert s.m == 2


def test_step_set_is_immutable():
    s = builtin_lattice("hexagonal")
    with pytest.raises(ValueError):
        s.odd[0, 0] = 5.0


def test_memory_params_examples():
    pr = derive_memory_params(1, 1, 3)
    assert (pr.alpha, pr.beta, pr.gamma, pr.delta) == (1, 1, 1, 0)
    assert classify_regime(pr).degenerate_flags == {GAMMA_IS_ONE}

    pr = derive_memory_params(1 / 3, 1 / 3, 3)
    assert max(abs(pr.alpha), abs(pr.beta), abs(pr.gamma), abs(pr.delta)) < 1e-15

    pr = derive_memory_params(0.8, 0.2, 3)
    assert pr.alpha == pytest.approx(0.7, abs=1e-15)
    assert pr.beta == pytest.approx(-0.2, abs=1e-15)
    assert pr.gamma == pytest.approx(0.25, abs=1e-15)
    assert pr.delta == pytest.approx(0.45, abs=1e-15)


@pytest.mark.parametrize("p, q, m", [(1.2, 0.2, 3), (-0.1, 0.5, 3), (0.5, 0.5, 1), (0.5, float("nan"), 3)])
def test_memory_params_out_of_range(p, q, m):
    with pytest.raises(OutOfRange):
        derive_memory_params(p, q, m)


def test_regimes():
    def mk(delta):
        return MemoryParams(0, 0, 3, 0, 0, 0.1, delta)

    assert classify_regime(mk(0.075)).kind == DIFFUSIVE
    assert classify_regime(mk(0.5)).kind == CRITICAL
    assert classify_regime(mk(0.6)).kind == SUPERDIFFUSIVE
    r = classify_regime(derive_memory_params(1, 0, 2))
    assert r.kind == SUPERDIFFUSIVE and r.degenerate_flags == {DELTA_IS_ONE}


def test_critical_from_fraction_input():
    assert classify_regime(derive_memory_params(0.9, 7 / 30, 3)).kind == CRITICAL


@given(st.floats(0, 1), st.floats(0, 1), st.integers(2, 12))
def test_parameter_identities_and_range(p, q, m):
    pr = derive_memory_params(p, q, m)
    assert abs(pr.gamma + pr.delta - pr.alpha) <= 1e-15
    assert abs(pr.gamma - pr.delta - pr.beta) <= 1e-15
    assert admissible_range(pr)


def test_mean_odd_step():
    assert np.allclose(mean_odd_step(builtin_lattice("hexagonal")), 0.0, atol=1e-15)
    assert np.allclose(mean_odd_step(builtin_lattice("brick_wall")), [0, 1 / 3])


def test_rotation_invariant_sets_have_zero_mean():
    for m in (3, 5, 7):
        ang = 2 * np.pi * np.arange(m) / m
        s = validate_step_set(np.c_[np.cos(ang), np.sin(ang)])
        assert np.allclose(mean_odd_step(s), 0.0, atol=1e-14)


def test_builtins():
    assert set(BUILTIN_NAMES) == {"hexagonal", "brick_wall", "distorted_hexagonal", "two_step_line"}
    assert builtin_lattice("hexagonal") == validate_step_set(HEX)
    assert np.array_equal(builtin_lattice("distorted_hexagonal").odd, [[1, 0], [0.5, 1], [0, 0.5]])
    line = builtin_lattice("two_step_line")
    assert (line.m, line.dimension) == (2, 1)
    with pytest.raises(UnknownName):
        builtin_lattice("unknown")


def test_brick_wall_is_overlapping():
    bw = builtin_lattice("brick_wall")
    assert np.array_equal(bw.odd, [[1, 0], [-1, 0], [0, 1]])
    assert not bw.disjoint
    with pytest.raises(OverlapViolation):
        validate_step_set(bw.odd)
    assert all(builtin_lattice(n).disjoint for n in BUILTIN_NAMES if n != "brick_wall")


vec = st.lists(st.integers(-2, 2), min_size=2, max_size=2).map(tuple)


@settings(max_examples=200)
@given(st.lists(vec, min_size=2, max_size=5))
def test_accepted_iff_negation_closure_has_2m_vectors(raw):
    closure = set(raw) | {tuple(-x for x in v) for v in raw}
    expected_ok = (0, 0) not in raw and len(closure) == 2 * len(raw)
    try:
        validate_step_set(raw)
        ok = True
    except (ZeroVector, DuplicateVector, OverlapViolation):
        ok = False
    assert ok == expected_ok


def test_lattice_json_roundtrip(tmp_path):
    s = builtin_lattice("distorted_hexagonal")
    text = json.dumps(s.to_json())
    assert parse_lattice_json(text) == s


@pytest.mark.parametrize(
    "text, err",
    [
        ('{"dimension": 2, "odd_steps": [[1, 0], [0, 1]], "name": "x"}', LatticeFileError),
        ('{"odd_steps": [[1, 0], [0, 1]]}', LatticeFileError),
        ('{"dimension": 2, "odd_steps": [[1, 0], [0, 1, 1]]}', DimensionMismatch),
        ("not json", LatticeFileError),
        ('{"dimension": 0, "odd_steps": []}', LatticeFileError),
        ('{"dimension": 1, "odd_steps": [[1], [-1]]}', OverlapViolation),
    ],
)
def test_lattice_json_errors(text, err):
    with pytest.raises(err):
        parse_lattice_json(text)


def test_equal_step_sets_hash_equal():
    a, b = builtin_lattice("hexagonal"), validate_step_set(HEX)
    assert a == b and hash(a) == hash(b)
    assert len({a, b}) == 1


def test_grid_range_property():
    for m in (2, 3, 6):
        for p, q in itertools.product(np.linspace(0, 1, 11), repeat=2):
            pr = derive_memory_params(p, q, m)
            lo = -1 / (m - 1) - 1e-12
            assert lo <= pr.gamma + pr.delta <= 1 + 1e-12
            assert lo <= pr.gamma - pr.delta <= 1 + 1e-12
