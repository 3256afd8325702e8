"""Exhaustive small-n laws of the count vector, used as ground truth in tests.

``exact_law`` pushes probability mass forward along the urn step law.
``history_simulator_law`` ignores the urn entirely: it enumerates step
sequences and applies the remembered-step kernel literally, comparing step
vectors (not indices), then aggregates to counts.  Agreement of the two is
the count-sufficiency check behind the O(m) sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TooLarge, TooShort
from .lattice import VECTOR_ATOL, MemoryParams, StepSet, mean_odd_step
from .moments import conditional_step_mean
from .urn import GeneratorMatrices, build_generators

MAX_STATES = 10**6
HISTORY_MAX_N = 6


@dataclass(frozen=True)
class ExactLaw:
    n: int
    m: int
    table: dict  # count tuple (length 2m) -> probability

    def total_mass(self) -> float:
        return math.fsum(self.table.values())

    def states(self) -> list[tuple]:
        return sorted(self.table)

    def probabilities(self, states) -> np.ndarray:
        return np.array([self.table.get(tuple(s), 0.0) for s in states])

    def total_variation(self, other: "ExactLaw") -> float:
        keys = set(self.table) | set(other.table)
        return 0.5 * math.fsum(abs(self.table.get(k, 0.0) - other.table.get(k, 0.0)) for k in keys)


@dataclass(frozen=True)
class ExactMoments:
    mean_counts: np.ndarray
    s: float
    t: float
    u: float
    mean_position: np.ndarray


def _unit(i: int, size: int) -> tuple:
    y = [0] * size
    y[i] = 1
    return tuple(y)


def _state_bound(n: int, m: int) -> int:
    # counts split as ceil(n/2) odd steps over m colors and floor(n/2) even steps over m colors
    n_odd, n_even = (n + 1) // 2, n // 2
    return math.comb(n_odd + m - 1, m - 1) * math.comb(n_even + m - 1, m - 1)


def exact_law(
    n: int,
    steps: StepSet,
    params: MemoryParams,
    max_states: int = MAX_STATES,
    gens: GeneratorMatrices | None = None,
) -> ExactLaw:
    """Law of Y_n by forward dynamic programming over count vectors."""
    if n < 1:
        raise TooShort(f"n must be at least 1, got {n}")
    m = steps.m
    bound = max(_state_bound(k, m) for k in range(1, n + 1))
    if bound > max_states:
        raise TooLarge(f"up to {bound} count states at n={n}, m={m}; limit is {max_states}")
    gens = gens if gens is not None else build_generators(params)
    table = {_unit(i, 2 * m): 1.0 / m for i in range(m)}
    for k in range(1, n):
        H = gens.for_step(k + 1)
        nxt: dict = {}
        for y, prob in table.items():
            law = H @ np.asarray(y, dtype=float) / k
            for w in np.flatnonzero(law > 0.0):
                z = list(y)
                z[w] += 1
                z = tuple(z)
                nxt[z] = nxt.get(z, 0.0) + prob * law[w]
        table = nxt
    return ExactLaw(n, m, table)


def _split(y, steps: StepSet):
    y = np.asarray(y, dtype=float)
    m = steps.m
    S = steps.matrix @ y
    T = steps.odd.T @ y[:m] + steps.odd.T @ y[m:]  # minus the even steps -v_i
    return S, T


def exact_moments_from_law(law: ExactLaw, steps: StepSet) -> ExactMoments:
    states = law.states()
    probs = law.probabilities(states)
    Y = np.asarray(states, dtype=float)
    S = np.array([_split(y, steps)[0] for y in states])
    T = np.array([_split(y, steps)[1] for y in states])
    ES = probs @ S
    ET = probs @ T
    dS, dT = S - ES, T - ET
    return ExactMoments(
        mean_counts=probs @ Y,
        s=float(probs @ np.einsum("ij,ij->i", dS, dS)),
        t=float(probs @ np.einsum("ij,ij->i", dT, dT)),
        u=float(probs @ np.einsum("ij,ij->i", dS, dT)),
        mean_position=ES,
    )


def _same(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(np.abs(a - b) <= VECTOR_ATOL))


def _kernel_prob(k: int, v: np.ndarray, v_is_odd: bool, w: np.ndarray, params: MemoryParams) -> float:
    """P(G_k(v) = w) for w in the class used at time k."""
    m = params.m
    w_is_odd = k % 2 == 1
    if v_is_odd == w_is_odd:
        return params.p if _same(v, w) else (1.0 - params.p) / (m - 1)
    return params.q if _same(-v, w) else (1.0 - params.q) / (m - 1)


def history_simulator_law(
    n: int, steps: StepSet, params: MemoryParams, max_n: int = HISTORY_MAX_N
) -> ExactLaw:
    """Law of Y_n from the literal definition over full step histories."""
    if n < 1:
        raise TooShort(f"n must be at least 1, got {n}")
    if n > max_n:
        raise TooLarge(f"history enumeration limited to n <= {max_n}, got {n}")
    m = steps.m
    odd = [steps.odd[i] for i in range(m)]
    even = [-steps.odd[i] for i in range(m)]
    # a history is a list of (vector, is_odd, color index)
    paths = [([(odd[i], True, i)], 1.0 / m) for i in range(m)]
    for k in range(1, n):
        targets = [(odd[i], True, i) for i in range(m)] if (k + 1) % 2 == 1 else [
            (even[i], False, m + i) for i in range(m)
        ]
        extended = []
        for hist, prob in paths:
            for w, w_odd, color in targets:
                # average over the remembered index U_k uniform on 1..k
                pw = math.fsum(_kernel_prob(k + 1, v, v_odd, w, params) for v, v_odd, _ in hist) / k
                if pw > 0.0:
                    extended.append((hist + [(w, w_odd, color)], prob * pw))
        paths = extended
    table: dict = {}
    for hist, prob in paths:
        y = [0] * (2 * m)
        for _, _, color in hist:
            y[color] += 1
        key = tuple(y)
        table[key] = table.get(key, 0.0) + prob
    return ExactLaw(n, m, table)


def _zeta(n: int, delta: float) -> float:
    z = 1.0
    for k in range(2, n):
        z *= 1.0 + delta / k
    return z


def martingale_drift(
    counts, n: int, steps: StepSet, params: MemoryParams, gens: GeneratorMatrices | None = None
) -> np.ndarray:
    """E[M_{n+1} - M_n | Y_n = counts] for n >= 2.

    The increment is assembled from S/zeta and the compensator recurrence
    used by the simulator, then averaged over the urn step law.
    """
    if n < 2:
        raise TooShort(f"martingale increments start at n = 2, got {n}")
    gens = gens if gens is not None else build_generators(params)
    gamma, delta = params.gamma, params.delta
    vbar = mean_odd_step(steps)
    S, T = _split(counts, steps)
    z_n = _zeta(n, delta)
    z_next = (1.0 + delta / n) * z_n
    sign = (-1.0) ** n
    odd_n = 1.0 if n % 2 == 1 else 0.0
    dR = ((gamma / n) * sign * T + ((1.0 - gamma) * sign - (delta / n) * odd_n) * vbar) / z_next
    law = gens.for_step(n + 1) @ np.asarray(counts, dtype=float) / n
    drift = np.zeros(steps.dimension)
    for w in np.flatnonzero(law > 0.0):
        dM = (S + steps.vectors[w]) / z_next - S / z_n - dR
        drift += law[w] * dM
    return drift


def increment_drift(counts, n: int, steps: StepSet, params: MemoryParams) -> np.ndarray:
    """sum_w P(w | y) zeta_{n+1}^{-1} (v_w - E[X_{n+1} | y]) with the closed-form conditional mean."""
    gens = build_generators(params)
    law = gens.for_step(n + 1) @ np.asarray(counts, dtype=float) / n
    mean = conditional_step_mean(counts, n, steps, params)
    z_next = _zeta(n + 1, params.delta)
    return (steps.matrix @ law - mean) / z_next
