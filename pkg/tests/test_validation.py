import json

import numpy as np
import pytest

import dipole_erw.validation as validation
from dipole_erw.urn import GeneratorMatrices, build_generators
from dipole_erw.validation import PQ_GRID, SUITES, TEST_LATTICES, run_validation


def test_grid_shape():
    assert len(PQ_GRID) == 9 and set(TEST_LATTICES) == {"two_step_line", "hexagonal"}


@pytest.mark.parametrize("scope", SUITES)
def test_suite_passes(scope):
    reports = run_validation([scope])
    assert reports and all(r.passed for r in reports)
    for r in reports:
        json.dumps(r.to_json())


def test_run_validation_all_default():
    reports = run_validation()
    assert len(reports) == 2 * 9 * (3 + 1 + 1 + 1)


def test_unknown_scope():
    with pytest.raises(ValueError):
        run_validation(["oracle", "nope"])


def _swap_blocks(params):
    # exchange the roles of A and B: columns still sum to one, dynamics wrong
    g = build_generators(params)
    m = params.m
    Z = np.zeros((m, m))
    H_odd = np.block([[g.B, g.A], [Z, Z]])
    H_even = np.block([[Z, Z], [g.A, g.B]])
    return GeneratorMatrices(np.array(g.B), np.array(g.A), H_odd, H_even, 0.5 * (H_odd + H_even))


def test_swapped_generators_detected(monkeypatch):
    monkeypatch.setattr(validation, "build_generators", _swap_blocks)
    for scope in ("oracle", "spectral", "martingale"):
        reports = run_validation([scope])
        # p = q cases are insensitive to the swap
        flagged = {r.check for r in reports if not r.passed}
        assert any("p=0.2 q=0.9" in c for c in flagged), scope
