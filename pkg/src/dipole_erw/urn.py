"""Periodic generating matrices of the step-count urn and their joint eigenbasis.

With counts ordered as (odd steps, even steps), the next-step law is
``H_{n+1} Y_n / n`` where ``H_{n+1}`` is ``H_odd`` for odd ``n+1`` and
``H_even`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DiagonalizationCheckFailed
from .lattice import MemoryParams, classify_regime

DIAG_ATOL = 1e-12


@dataclass(frozen=True)
class GeneratorMatrices:
    A: np.ndarray
    B: np.ndarray
    H_odd: np.ndarray
    H_even: np.ndarray
    H: np.ndarray

    def for_step(self, k: int) -> np.ndarray:
        """Generator used to draw step ``k`` (k >= 2)."""
        return self.H_odd if k % 2 == 1 else self.H_even


@dataclass(frozen=True)
class SpectralBasis:
    Q: np.ndarray
    P: np.ndarray


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def memory_block(x: float, m: int) -> np.ndarray:
    """x I_m + (1 - x)/m 1 1^T."""
    return x * np.eye(m) + (1.0 - x) / m * np.ones((m, m))


def build_generators(params: MemoryParams) -> GeneratorMatrices:
    m = params.m
    A = memory_block(params.alpha, m)
    B = memory_block(params.beta, m)
    Z = np.zeros((m, m))
    H_odd = np.block([[A, B], [Z, Z]])
    H_even = np.block([[Z, Z], [B, A]])
    H = 0.5 * (H_odd + H_even)
    _freeze(A, B, H_odd, H_even, H)
    return GeneratorMatrices(A, B, H_odd, H_even, H)


def helmert_basis(m: int) -> np.ndarray:
    """Columns u = 1/sqrt(m), then w_r = (1_r, -r, 0)/sqrt(r(r+1)) for r = 1..m-1."""
    Q = np.zeros((m, m))
    Q[:, 0] = 1.0 / math.sqrt(m)
    for r in range(1, m):
        col = np.zeros(m)
        col[:r] = 1.0
        col[r] = -float(r)
        Q[:, r] = col / math.sqrt(r * (r + 1))
    return Q


def expected_diagonal(params: MemoryParams) -> np.ndarray:
    m = params.m
    return np.concatenate(
        [[1.0], np.full(m - 1, params.gamma), [0.0], np.full(m - 1, params.delta)]
    )


def build_spectral_basis(params: MemoryParams, gens: GeneratorMatrices | None = None) -> SpectralBasis:
    """Construct Q and P and confirm they diagonalize A, B and H.

    ``gens`` defaults to the generators built from ``params``; passing a
    different set lets callers check externally supplied matrices.
    """
    m = params.m
    gens = gens if gens is not None else build_generators(params)
    Q = helmert_basis(m)
    P = np.block([[Q, Q], [Q, -Q]]) / math.sqrt(2.0)
    _freeze(Q, P)

    checks = {
        "Q^T Q": (Q.T @ Q, np.eye(m)),
        "Q^T A Q": (Q.T @ gens.A @ Q, np.diag(np.r_[1.0, np.full(m - 1, params.alpha)])),
        "Q^T B Q": (Q.T @ gens.B @ Q, np.diag(np.r_[1.0, np.full(m - 1, params.beta)])),
        "P^T P": (P.T @ P, np.eye(2 * m)),
        "P^T H P": (P.T @ gens.H @ P, np.diag(expected_diagonal(params))),
    }
    for name, (got, want) in checks.items():
        err = float(np.max(np.abs(got - want)))
        if err > DIAG_ATOL:
            raise DiagonalizationCheckFailed(f"{name} deviates by {err:.3e}")
    return SpectralBasis(Q, P)


def block_forms(params: MemoryParams) -> tuple[np.ndarray, np.ndarray]:
    """Expected P^T H_odd P and P^T H_even P in the constructive basis."""
    m = params.m
    G = np.diag(np.r_[1.0, np.full(m - 1, params.gamma)])
    D = np.diag(np.r_[0.0, np.full(m - 1, params.delta)])
    return np.block([[G, D], [G, D]]), np.block([[G, -D], [-G, D]])


def spectral_report(params: MemoryParams) -> dict:
    """Eigenvalues of H from the constructive diagonalization plus boundary flags.

    |gamma| = 1 or |delta| = 1 puts a second eigenvalue on the unit circle;
    gamma = -1 or delta = -1 are the cases where H fails to be primitive.
    """
    build_spectral_basis(params)
    eig = expected_diagonal(params)
    flags = []
    if params.gamma == 1.0:
        flags.append("gamma_is_one")
    if params.gamma == -1.0:
        flags.append("gamma_is_minus_one")
    if params.delta == 1.0:
        flags.append("delta_is_one")
    if params.delta == -1.0:
        flags.append("delta_is_minus_one")
    return {
        "eigenvalues": [float(x) for x in eig],
        "gamma": params.gamma,
        "delta": params.delta,
        "regime": classify_regime(params).kind,
        "boundary_flags": flags,
    }
