"""Exact moment sequences and asymptotic constants, computed without sampling.

Notation follows the walk: ``s_n = E|S_n - E S_n|^2``, ``t_n`` the same for
the auxiliary process T, ``u_n`` their cross moment, ``sigma2_n`` the
variance of the n-th step.  Arrays returned here are indexed by ``n``
directly; entries where a sequence is undefined hold NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DegenerateParams, InvalidTolerance, NotConverged, TooShort, WrongRegime
from .lattice import (
    CRITICAL,
    DIFFUSIVE,
    SUPERDIFFUSIVE,
    MemoryParams,
    StepSet,
    classify_regime,
    mean_odd_step,
)
from .urn import GeneratorMatrices, build_generators


@dataclass(frozen=True)
class MomentTrace:
    n: np.ndarray
    a: np.ndarray
    b: np.ndarray
    sigma2: np.ndarray
    s: np.ndarray
    t: np.ndarray
    u: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    tau: np.ndarray


@dataclass(frozen=True)
class AsymptoticPrediction:
    regime: str
    sigma2: float
    step_covariance: np.ndarray  # (1/m) sum (v - vbar)(v - vbar)^T over odd steps
    constant: float  # leading constant of s_n
    normalization: str  # "n", "n log n" or "n^(2 delta)"
    exponent: float
    covariance: np.ndarray | None  # CLT limit covariance; None in the superdiffusive regime

    def second_moment(self, n: float) -> float:
        """Predicted leading term of s_n."""
        if self.regime == DIFFUSIVE:
            return self.constant * n
        if self.regime == CRITICAL:
            return self.constant * n * math.log(n)
        return self.constant * n**self.exponent

    def scale(self, n: float) -> float:
        """Normalization that makes S_n converge: sqrt(n), sqrt(n log n) or n^delta."""
        if self.regime == DIFFUSIVE:
            return math.sqrt(n)
        if self.regime == CRITICAL:
            return math.sqrt(n * math.log(n))
        return n ** (self.exponent / 2.0)


@dataclass(frozen=True)
class SeriesResult:
    value: float
    tail_bound: float
    terms: int


def _require_nondegenerate(params: MemoryParams) -> None:
    if params.gamma >= 1.0 or params.delta >= 1.0:
        raise DegenerateParams(
            f"asymptotics need gamma < 1 and delta < 1 (gamma={params.gamma}, delta={params.delta})"
        )


def expected_counts(n: int, m: int) -> tuple[float, float]:
    """E[Y_n] = (a_n 1_m, b_n 1_m): odd-step and even-step entries."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return -(-n // 2) / m, (n // 2) / m


def expected_position(n: int, steps: StepSet) -> np.ndarray:
    a, b = expected_counts(n, steps.m)
    return (a - b) * steps.m * mean_odd_step(steps)


def expected_count_vector(n: int, m: int) -> np.ndarray:
    a, b = expected_counts(n, m)
    return np.r_[np.full(m, a), np.full(m, b)]


def _marginal_step_law(n: int, m: int, gens: GeneratorMatrices) -> np.ndarray:
    """E[Z_n], the unconditional law of step n."""
    if n == 1:
        return np.r_[np.full(m, 1.0 / m), np.zeros(m)]
    return gens.for_step(n) @ expected_count_vector(n - 1, m) / (n - 1)


def step_variance(n: int, steps: StepSet, params: MemoryParams, gens: GeneratorMatrices | None = None) -> float:
    if n < 1:
        raise ValueError("step index starts at 1")
    gens = gens if gens is not None else build_generators(params)
    pi = _marginal_step_law(n, steps.m, gens)
    V = steps.matrix
    mean = V @ pi
    return float(np.sum(np.sum(V * V, axis=0) * pi) - mean @ mean)


def _sigma2_sequence(n_max: int, steps: StepSet, params: MemoryParams) -> np.ndarray:
    # for n >= 2 the marginal law, hence sigma2_n, only depends on the parity of n
    gens = build_generators(params)
    sig = np.full(n_max + 1, np.nan)
    sig[1] = step_variance(1, steps, params, gens)
    if n_max >= 2:
        sig[2::2] = step_variance(2, steps, params, gens)
    if n_max >= 3:
        sig[3::2] = step_variance(3, steps, params, gens)
    return sig


@numba.njit(cache=True)
def _stu_recursion(sigma2, gamma, delta, s, t, u):
    n_max = sigma2.shape[0] - 1
    s[1] = t[1] = u[1] = sigma2[1]
    for n in range(1, n_max):
        sg = 1.0 if n % 2 == 0 else -1.0
        sn, tn, un = s[n], t[n], u[n]
        s[n + 1] = (1.0 + 2.0 * delta / n) * sn + (2.0 * gamma / n) * sg * un + sigma2[n + 1]
        t[n + 1] = (1.0 + 2.0 * gamma / n) * tn + (2.0 * delta / n) * sg * un + sigma2[n + 1]
        u[n + 1] = (1.0 + (delta + gamma) / n) * un + (sg / n) * (delta * sn + gamma * tn) + sg * sigma2[n + 1]


@numba.njit(cache=True)
def _scaling_recursion(delta, eta, zeta, tau):
    n_max = eta.shape[0] - 1
    if n_max >= 2:
        zeta[2] = 1.0
        tau[2] = 0.0
    for n in range(2, n_max):
        zeta[n + 1] = (1.0 + delta / n) * zeta[n]
        tau[n + 1] = tau[n] + 1.0 / (zeta[n + 1] * zeta[n + 1])
    if n_max >= 3:
        eta[3] = 1.0
    for n in range(3, n_max):
        eta[n + 1] = (1.0 + 2.0 * delta / n) * eta[n]


def scaling_sequences(n_max: int, params: MemoryParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """eta (from n = 3), zeta and tau (from n = 2), by their product recursions."""
    if n_max < 3:
        raise TooShort("scaling sequences need n_max >= 3")
    eta = np.full(n_max + 1, np.nan)
    zeta = np.full(n_max + 1, np.nan)
    tau = np.full(n_max + 1, np.nan)
    _scaling_recursion(params.delta, eta, zeta, tau)
    return eta, zeta, tau


# B_2k / (2k (2k - 1)) for k = 1..7
_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188, -691 / 360360, 1 / 156)
_STIRLING_MIN_Z = 10.0


def log_gamma_ratio(z, a: float):
    """log(Gamma(z + a) / Gamma(z)) for z > 0, z + a > 0.

    Differencing two lgamma values loses ~eps * lgamma(z) absolutely, about
    1e-9 relative at z = 1e6.  For z >= 10 the Stirling series of the
    difference is used instead; the leading terms are arranged around
    log1p(a / z) so nothing large cancels.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < _STIRLING_MIN_Z
    if np.any(small):
        zs = z[small]
        out[small] = _lgamma(zs + a) - _lgamma(zs)
    big = ~small
    if np.any(big):
        zb = z[big]
        za = zb + a
        # (za - 1/2) log za - (z - 1/2) log z - a, rewritten
        lead = (zb - 0.5) * np.log1p(a / zb) + a * np.log(za) - a
        corr = np.zeros_like(zb)
        pa, pz = 1.0 / za, 1.0 / zb
        ia2, iz2 = pa * pa, pz * pz
        for c in _STIRLING:
            corr += c * (pa - pz)
            pa, pz = pa * ia2, pz * iz2
        out[big] = lead + corr
    return out if out.ndim else float(out)


def eta_closed_form(n, delta: float):
    """Gamma(n + 2 delta) Gamma(3) / (Gamma(3 + 2 delta) Gamma(n))."""
    return np.exp(log_gamma_ratio(n, 2 * delta) + math.log(2.0) - math.lgamma(3 + 2 * delta))


def zeta_closed_form(n, delta: float):
    """Gamma(n + delta) / (Gamma(n) Gamma(2 + delta))."""
    return np.exp(log_gamma_ratio(n, delta) - math.lgamma(2 + delta))


_lgamma = np.vectorize(math.lgamma, otypes=[float])


def second_moment_recursion(n_max: int, steps: StepSet, params: MemoryParams) -> MomentTrace:
    if n_max < 1:
        raise TooShort("n_max must be at least 1")
    sig = _sigma2_sequence(n_max, steps, params)
    s = np.full(n_max + 1, np.nan)
    t = np.full(n_max + 1, np.nan)
    u = np.full(n_max + 1, np.nan)
    _stu_recursion(sig, params.gamma, params.delta, s, t, u)
    eta = np.full(n_max + 1, np.nan)
    zeta = np.full(n_max + 1, np.nan)
    tau = np.full(n_max + 1, np.nan)
    _scaling_recursion(params.delta, eta, zeta, tau)
    n = np.arange(n_max + 1)
    m = steps.m
    return MomentTrace(
        n=n,
        a=-(-n // 2) / m,
        b=(n // 2) / m,
        sigma2=sig,
        s=s,
        t=t,
        u=u,
        eta=eta,
        zeta=zeta,
        tau=tau,
    )


def count_covariance_recursion(n_max: int, steps: StepSet, params: MemoryParams) -> np.ndarray:
    """Covariance matrices E[(Y_n - EY_n)(Y_n - EY_n)^T] for n = 0..n_max."""
    if n_max < 1:
        raise TooShort("n_max must be at least 1")
    m = steps.m
    gens = build_generators(params)
    I = np.eye(2 * m)
    out = np.zeros((n_max + 1, 2 * m, 2 * m))
    pi1 = _marginal_step_law(1, m, gens)
    C = np.diag(pi1) - np.outer(pi1, pi1)
    out[1] = C
    for n in range(1, n_max):
        H = gens.for_step(n + 1)
        ey = expected_count_vector(n, m)
        second = C + np.outer(ey, ey)
        pi = H @ ey / n
        noise = np.diag(pi) - H @ second @ H.T / (n * n)
        G = I + H / n
        C = G @ C @ G.T + noise
        out[n + 1] = C
    return out


def covariance_functionals(cov: np.ndarray, steps: StepSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(s_n, t_n, u_n) as quadratic functionals of count covariances."""
    V = steps.matrix
    W = np.hstack([steps.odd.T, steps.odd.T])  # T_n = W Y_n
    s = np.einsum("ia,nab,ib->n", V, cov, V)
    t = np.einsum("ia,nab,ib->n", W, cov, W)
    u = np.einsum("ia,nab,ib->n", V, cov, W)
    return s, t, u


def odd_step_covariance(steps: StepSet) -> np.ndarray:
    centred = steps.odd - mean_odd_step(steps)
    return centred.T @ centred / steps.m


def limit_constants(steps: StepSet, params: MemoryParams, regime: str | None = None,
                    tolerance: float = 1e-4) -> AsymptoticPrediction:
    """Leading asymptotics of s_n and the CLT covariance.

    ``regime``, when given, must agree with the classification of ``params``.
    """
    _require_nondegenerate(params)
    kind = classify_regime(params).kind
    if regime is not None and regime != kind:
        raise WrongRegime(f"params are {kind} (delta={params.delta}), not {regime}")
    step_cov = odd_step_covariance(steps)
    sigma2 = float(np.trace(step_cov))
    d = params.delta
    if kind == DIFFUSIVE:
        c = 1.0 / (1.0 - 2.0 * d)
        return AsymptoticPrediction(kind, sigma2, step_cov, sigma2 * c, "n", 1.0, c * step_cov)
    if kind == CRITICAL:
        return AsymptoticPrediction(kind, sigma2, step_cov, sigma2, "n log n", 1.0, step_cov)
    C = superdiffusive_constant(steps, params, tolerance).value
    return AsymptoticPrediction(kind, sigma2, step_cov, C, "n^(2 delta)", 2.0 * d, None)


@numba.njit(cache=True)
def _series_chunk(state, k_end, gamma, delta, sig_odd, sig_even):
    """Continue the s/t/u recursion and the C series from state[0] = k to k_end.

    state = [k, s_k, t_k, u_k, eta_{k}, sigma_part, u_part, last_u_term, prev_u_term]
    """
    k = int(state[0])
    s, t, u, eta = state[1], state[2], state[3], state[4]
    sig_part, u_part = state[5], state[6]
    last, prev = state[7], state[8]
    while k < k_end:
        sg = 1.0 if k % 2 == 0 else -1.0
        sig_next = sig_odd if (k + 1) % 2 == 1 else sig_even
        eta_next = (1.0 + 2.0 * delta / k) * eta
        uterm = (2.0 * gamma / k) * sg * u / eta_next
        sig_part += sig_next / eta_next
        u_part += uterm
        prev, last = last, uterm
        s_new = (1.0 + 2.0 * delta / k) * s + (2.0 * gamma / k) * sg * u + sig_next
        t_new = (1.0 + 2.0 * gamma / k) * t + (2.0 * delta / k) * sg * u + sig_next
        u_new = (1.0 + (delta + gamma) / k) * u + (sg / k) * (delta * s + gamma * t) + sg * sig_next
        s, t, u, eta = s_new, t_new, u_new, eta_next
        k += 1
    state[0] = k
    state[1], state[2], state[3], state[4] = s, t, u, eta
    state[5], state[6], state[7], state[8] = sig_part, u_part, last, prev


def _log_inverse_eta_tail(j0: int, delta: float) -> float:
    """log of sum_{j >= j0} 1/eta_j, in closed form (needs delta > 1/2)."""
    c = 2.0 * delta
    log_sum = -log_gamma_ratio(float(j0), c - 1.0) - math.log(c - 1.0)
    return math.lgamma(3.0 + c) - math.log(2.0) + log_sum


def superdiffusive_constant(steps: StepSet, params: MemoryParams, tolerance: float = 1e-4,
                            max_terms: int = 1 << 27) -> SeriesResult:
    """Limit of s_n / n^(2 delta) for 1/2 < delta < 1, summed as a series.

    The step-variance part of the tail is added in closed form.  The part
    driven by u_n is summed over doubling blocks [K, 2K); with terms of
    order k^(-delta-1/2), consecutive block sums shrink at least by the
    ratio r = 2^(1/2 - delta), so the remaining tail is at most
    |last block sum| * r / (1 - r).  Blocks always end at even k, which
    keeps the alternating u-terms paired.
    """
    if not tolerance > 0:
        raise InvalidTolerance(f"tolerance must be positive, got {tolerance}")
    _require_nondegenerate(params)
    if classify_regime(params).kind != SUPERDIFFUSIVE:
        raise WrongRegime(f"superdiffusive constant needs delta > 1/2 (delta={params.delta})")
    gamma, delta = params.gamma, params.delta
    gens = build_generators(params)
    sig_even = step_variance(2, steps, params, gens)
    sig_odd = step_variance(3, steps, params, gens)

    trace = second_moment_recursion(3, steps, params)
    state = np.array([3.0, trace.s[3], trace.t[3], trace.u[3], 1.0, 0.0, 0.0, 0.0, 0.0])
    prefactor = 2.0 / math.gamma(3.0 + 2.0 * delta)
    ratio = 2.0 ** (0.5 - delta)
    k_end = 1 << 10
    _series_chunk(state, k_end, gamma, delta, sig_odd, sig_even)
    while True:
        u_before = state[6]
        k_end = min(2 * k_end, max_terms)
        _series_chunk(state, k_end, gamma, delta, sig_odd, sig_even)
        k = int(state[0])
        # terms k' >= k still missing; their sigma2 part is sum_{j >= k+1} sigma2_j / eta_j
        tail_inv = math.exp(_log_inverse_eta_tail(k + 1, delta))
        sig_tail = 0.5 * (sig_odd + sig_even) * tail_inv
        sig_slack = 0.5 * abs(sig_odd - sig_even) * tail_inv
        u_slack = abs(state[6] - u_before) * ratio / (1.0 - ratio)
        value = prefactor * (trace.s[3] + state[5] + state[6] + sig_tail)
        bound = prefactor * (u_slack + sig_slack)
        if bound < tolerance:
            return SeriesResult(float(value), float(bound), k)
        if k_end >= max_terms:
            raise NotConverged(f"tail bound {bound:.3e} above tolerance after {k} terms")


def auxiliary_constant_estimate(steps: StepSet, params: MemoryParams, n: int = 10**6) -> float:
    """t_n / n^(2 gamma) at ``n``; only meaningful for gamma > 1/2."""
    _require_nondegenerate(params)
    if not params.gamma > 0.5:
        raise WrongRegime(f"t_n / n^(2 gamma) needs gamma > 1/2 (gamma={params.gamma})")
    trace = second_moment_recursion(n, steps, params)
    return float(trace.t[n] / n ** (2.0 * params.gamma))


def conditional_step_mean(counts, n: int, steps: StepSet, params: MemoryParams) -> np.ndarray:
    """E[X_{n+1} | history] from the counts alone, in closed form."""
    counts = np.asarray(counts, dtype=float)
    if n < 1 or counts.sum() != n:
        raise ValueError("counts must sum to n >= 1")
    m = steps.m
    S = steps.matrix @ counts
    T = steps.odd.T @ (counts[:m] + counts[m:])
    sg = (-1.0) ** n
    odd = 1.0 if n % 2 == 1 else 0.0
    g, d = params.gamma, params.delta
    return (d / n) * S + (g / n) * sg * T + ((1.0 - g) * sg - (d / n) * odd) * mean_odd_step(steps)


MOMENT_HEADER = ["n", "sigma2_n", "s_n", "t_n", "u_n", "eta_n", "zeta_n", "tau_n"]


def moment_rows(trace: MomentTrace, rows):
    for n in rows:
        yield [int(n)] + [
            repr(float(x[n]))
            for x in (trace.sigma2, trace.s, trace.t, trace.u, trace.eta, trace.zeta, trace.tau)
        ]
