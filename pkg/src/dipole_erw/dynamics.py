"""Single-walk simulation driven by the step-count vector.

The law of the next step depends on the history only through the count
vector ``Y_n``, so each step costs O(m) regardless of ``n``.  Every path
(``advance``, ``run_walk`` and the ensemble runner) goes through the same
compiled step routine, so identical uniform draws give identical walks.

Random streams: walk ``i`` under seed ``s`` draws from
``Generator(PCG64(SeedSequence(s, spawn_key=(i,))))``, one ``random()``
call per step, consumed by inverse-CDF in fixed index order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import TooShort
from .lattice import MemoryParams, StepSet, mean_odd_step
from .urn import GeneratorMatrices, build_generators


@dataclass(frozen=True)
class WalkState:
    n: int
    counts: np.ndarray
    position: np.ndarray
    auxiliary: np.ndarray
    martingale: np.ndarray
    compensator: np.ndarray
    zeta: float
    anchor: np.ndarray  # S_2, subtracted so that M_2 = 0

    def __post_init__(self):
        for name in ("counts", "position", "auxiliary", "martingale", "compensator", "anchor"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, WalkState):
            return NotImplemented
        return (
            self.n == other.n
            and self.zeta == other.zeta
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("counts", "position", "auxiliary", "martingale", "compensator", "anchor")
            )
        )

    __hash__ = None


@dataclass(frozen=True)
class StepLaw:
    """Probabilities of the next step over the 2m step indices."""

    probs: np.ndarray

    def mean(self, steps: StepSet) -> np.ndarray:
        return steps.matrix @ self.probs


def initial_state(steps: StepSet) -> WalkState:
    m, d = steps.m, steps.dimension
    z = np.zeros(d)
    return WalkState(0, np.zeros(2 * m, dtype=np.int64), z, z, z, z, 0.0, z)


def initial_step_law(m: int) -> StepLaw:
    probs = np.zeros(2 * m)
    probs[:m] = 1.0 / m
    return StepLaw(probs)


def step_law_from_counts(
    counts: np.ndarray, n: int, params: MemoryParams, gens: GeneratorMatrices | None = None
) -> StepLaw:
    """Law of step n+1 given Y_n = counts, i.e. H_{n+1} Y_n / n."""
    if n == 0:
        return initial_step_law(params.m)
    gens = gens if gens is not None else build_generators(params)
    return StepLaw(gens.for_step(n + 1) @ np.asarray(counts, dtype=float) / n)


def step_law(state: WalkState, params: MemoryParams, gens: GeneratorMatrices | None = None) -> StepLaw:
    return step_law_from_counts(state.counts, state.n, params, gens)


@numba.njit(cache=True, nogil=True, inline="always")
def _choose_step(counts, n, m, alpha, beta, u):
    """Inverse-CDF draw of the index of step n+1 from the count vector."""
    if n == 0:
        i = int(u * m)
        return i if i < m else m - 1
    n_odd = (n + 1) // 2
    n_even = n // 2
    if n % 2 == 0:
        # step n+1 is odd: remembered odd steps repeat via alpha, even ones reverse via beta
        base = ((1.0 - alpha) * n_odd + (1.0 - beta) * n_even) / m
        offset, own0, other0 = 0, 0, m
    else:
        base = ((1.0 - beta) * n_odd + (1.0 - alpha) * n_even) / m
        offset, own0, other0 = m, m, 0
    threshold = u * n
    cum = 0.0
    last = -1
    for i in range(m):
        w = alpha * counts[own0 + i] + beta * counts[other0 + i] + base
        if w > 0.0:
            cum += w
            last = i
            if threshold < cum:
                return offset + i
    return offset + last


@numba.njit(cache=True, nogil=True)
def _run_steps(gen, draws, state_counts, state_vec, zeta, n0, n1,
               alpha, beta, gamma, delta, V, vbar, checkpoints, counts_out, vec_out, zeta_out):
    """Advance a walk from time n0 to n1 in place and record checkpoints.

    ``state_vec`` rows are S, T, R, S_2.  Uniforms come from ``draws`` when
    it is non-empty, otherwise from ``gen``.  ``vec_out[c]`` receives rows
    S, T, M, R, S_2 at checkpoint c.  Returns the final zeta.
    """
    m2 = V.shape[0]
    m = m2 // 2
    d = V.shape[1]
    # local copies: keeps the hot loop free of aliasing reloads
    counts = state_counts.copy()
    S = state_vec[0].copy()
    T = state_vec[1].copy()
    R = state_vec[2].copy()
    S2 = state_vec[3].copy()
    use_draws = draws.shape[0] > 0
    c = 0
    n_cp = checkpoints.shape[0]
    while c < n_cp and checkpoints[c] <= n0:
        c += 1
    next_cp = checkpoints[c] if c < n_cp else -1
    for n in range(n0, n1):
        u = draws[n - n0] if use_draws else gen.random()
        idx = _choose_step(counts, n, m, alpha, beta, u)
        sign = 1.0 if n % 2 == 0 else -1.0
        if n >= 2:
            zeta = (1.0 + delta / n) * zeta
            odd_n = 1.0 if n % 2 == 1 else 0.0
            cst = (1.0 - gamma) * sign - (delta / n) * odd_n
            for j in range(d):
                R[j] += ((gamma / n) * sign * T[j] + cst * vbar[j]) / zeta
        counts[idx] += 1
        for j in range(d):
            S[j] += V[idx, j]
            T[j] += sign * V[idx, j]
        if n == 1:
            zeta = 1.0
            for j in range(d):
                S2[j] = S[j]
                R[j] = 0.0
        if n + 1 == next_cp:
            counts_out[c, :] = counts
            for j in range(d):
                vec_out[c, 0, j] = S[j]
                vec_out[c, 1, j] = T[j]
                vec_out[c, 2, j] = S[j] / zeta - R[j] - S2[j] if n >= 1 else 0.0
                vec_out[c, 3, j] = R[j]
                vec_out[c, 4, j] = S2[j]
            zeta_out[c] = zeta
            c += 1
            next_cp = checkpoints[c] if c < n_cp else -1
    state_counts[:] = counts
    state_vec[0, :] = S
    state_vec[1, :] = T
    state_vec[2, :] = R
    state_vec[3, :] = S2
    return zeta


_NO_DRAWS = np.zeros(0)
_NO_CHECKPOINTS = np.zeros(0, dtype=np.int64)
_DUMMY_GEN = np.random.Generator(np.random.PCG64(0))


def walk_generator(seed: int, stream: int) -> np.random.Generator:
    """Independent reproducible stream for walk ``stream`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def checkpoint_schedule(n_max: int, schedule: str = "pow2") -> np.ndarray:
    """Checkpoint times: ``pow2`` gives {2^k <= n_max} plus n_max,
    ``linear:k`` gives k evenly spaced times ending at n_max."""
    if n_max < 1:
        raise TooShort(f"n_max must be positive, got {n_max}")
    if schedule == "pow2":
        pts = [1 << k for k in range(n_max.bit_length()) if (1 << k) <= n_max]
    elif schedule.startswith("linear:"):
        try:
            k = int(schedule.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad checkpoint schedule {schedule!r}") from None
        if k < 1:
            raise ValueError(f"bad checkpoint schedule {schedule!r}")
        pts = [max(1, (n_max * j) // k) for j in range(1, k + 1)]
    else:
        raise ValueError(f"bad checkpoint schedule {schedule!r}; use 'pow2' or 'linear:k'")
    return np.unique(np.asarray(pts + [n_max], dtype=np.int64))


def _as_checkpoints(checkpoints, n_max: int) -> np.ndarray:
    if checkpoints is None:
        return checkpoint_schedule(n_max)
    if isinstance(checkpoints, str):
        return checkpoint_schedule(n_max, checkpoints)
    cps = np.unique(np.asarray(checkpoints, dtype=np.int64))
    if cps.size == 0 or cps[0] < 1 or cps[-1] > n_max:
        raise ValueError("checkpoints must lie in 1..n_max")
    return cps


def advance(state: WalkState, steps: StepSet, params: MemoryParams, uniform_draw: float) -> WalkState:
    """Take one step using ``uniform_draw`` in [0, 1)."""
    counts = state.counts.copy()
    vec = np.vstack([state.position, state.auxiliary, state.compensator, state.anchor])
    n = state.n
    out_c = np.zeros((1, counts.shape[0]), dtype=np.int64)
    out_v = np.zeros((1, 5, steps.dimension))
    out_z = np.zeros(1)
    _run_steps(
        _DUMMY_GEN, np.array([float(uniform_draw)]), counts, vec, state.zeta, n, n + 1,
        params.alpha, params.beta, params.gamma, params.delta,
        steps.vectors, mean_odd_step(steps), np.array([n + 1], dtype=np.int64), out_c, out_v, out_z,
    )
    return _snapshot(n + 1, out_c[0], out_v[0], out_z[0])


def _snapshot(n, counts, vec, zeta) -> WalkState:
    return WalkState(int(n), counts, vec[0], vec[1], vec[2], vec[3], float(zeta), vec[4])


def simulate_checkpoints(gen, steps: StepSet, params: MemoryParams, n_max: int, cps: np.ndarray):
    """Run one fresh walk and return (counts, vectors, zeta) arrays at the checkpoints."""
    m2, d, c = 2 * steps.m, steps.dimension, cps.shape[0]
    counts_out = np.zeros((c, m2), dtype=np.int64)
    vec_out = np.zeros((c, 5, d))
    zeta_out = np.zeros(c)
    _run_steps(
        gen, _NO_DRAWS, np.zeros(m2, dtype=np.int64), np.zeros((4, d)), 0.0, 0, n_max,
        params.alpha, params.beta, params.gamma, params.delta,
        steps.vectors, mean_odd_step(steps), cps, counts_out, vec_out, zeta_out,
    )
    return counts_out, vec_out, zeta_out


def run_walk(
    steps: StepSet,
    params: MemoryParams,
    n_max: int,
    seed: int = 0,
    stream: int = 0,
    checkpoints=None,
) -> list[WalkState]:
    """Simulate one walk to ``n_max`` and return snapshots at the checkpoints."""
    if n_max < 2:
        raise TooShort(f"n_max must be at least 2, got {n_max}")
    cps = _as_checkpoints(checkpoints, n_max)
    counts, vec, zeta = simulate_checkpoints(walk_generator(seed, stream), steps, params, n_max, cps)
    return [_snapshot(n, counts[i], vec[i], zeta[i]) for i, n in enumerate(cps)]


def trajectory_header(d: int, m: int) -> list[str]:
    return (
        ["n"]
        + [f"S_{j + 1}" for j in range(d)]
        + [f"T_{j + 1}" for j in range(d)]
        + [f"M_{j + 1}" for j in range(d)]
        + [f"Y_{i + 1}" for i in range(2 * m)]
    )


def trajectory_rows(snapshots: list[WalkState]):
    for s in snapshots:
        yield (
            [s.n]
            + [repr(float(x)) for x in s.position]
            + [repr(float(x)) for x in s.auxiliary]
            + [repr(float(x)) for x in s.martingale]
            + [int(y) for y in s.counts]
        )
