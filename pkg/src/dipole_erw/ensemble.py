"""Independent-walk ensembles and the statistical checks run on them.

Walks are split into fixed blocks of ``BLOCK_SIZE`` and the blocks are
farmed out to a thread pool (the compiled kernel releases the GIL).  Every
walk writes into its own row of a preallocated array, and all statistics
are reduced from those arrays afterwards, so the output does not depend on
the number of workers or on scheduling order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import _as_checkpoints, simulate_checkpoints, walk_generator
from .errors import TooShort, WrongRegime
from .lattice import CRITICAL, DIFFUSIVE, SUPERDIFFUSIVE, MemoryParams, StepSet, classify_regime
from .moments import AsymptoticPrediction, expected_position

BLOCK_SIZE = 256
SE_MULTIPLIER = 4.0


@dataclass(frozen=True)
class EnsembleConfig:
    walks: int
    n_max: int
    checkpoints: object = None  # None, "pow2", "linear:k" or explicit times
    seed: int = 0
    workers: int | None = None

    def __post_init__(self):
        if self.walks < 1:
            raise ValueError(f"walks must be at least 1, got {self.walks}")
        if self.n_max < 2:
            raise TooShort(f"n_max must be at least 2, got {self.n_max}")


@dataclass(frozen=True)
class CheckpointStats:
    n: int
    walks: int
    expected_S: np.ndarray  # exact E[S_n]
    mean_S: np.ndarray
    se_mean_S: np.ndarray
    cov_S: np.ndarray
    se_cov_S: np.ndarray
    mean_counts: np.ndarray
    se_counts: np.ndarray
    e2: float  # (1/N) sum |S_n - E S_n|^2
    se_e2: float


@dataclass(frozen=True)
class EnsembleResult:
    config: EnsembleConfig
    checkpoints: np.ndarray
    stats: list
    positions: np.ndarray = field(repr=False)  # (walks, checkpoints, d)

    def at(self, n: int) -> CheckpointStats:
        for s in self.stats:
            if s.n == n:
                return s
        raise KeyError(f"no checkpoint at n={n}")

    def samples(self, n: int) -> np.ndarray:
        idx = np.flatnonzero(self.checkpoints == n)
        if idx.size == 0:
            raise KeyError(f"no checkpoint at n={n}")
        return self.positions[:, idx[0], :]


@dataclass(frozen=True)
class CheckReport:
    check: str
    passed: bool
    observed: object
    expected: object
    tolerance: object

    def to_json(self) -> dict:
        return {
            "check": self.check,
            "pass": bool(self.passed),
            "observed": _jsonable(self.observed),
            "expected": _jsonable(self.expected),
            "tolerance": _jsonable(self.tolerance),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def worker_count(requested: int | None = None) -> int:
    """Requested worker count, defaulting to the CPU count, capped by ERW_THREADS."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("ERW_THREADS")
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValueError(f"ERW_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def _run_block(start, stop, seed, steps, params, n_max, cps, positions):
    c, m2 = cps.shape[0], 2 * steps.m
    csum = np.zeros((c, m2), dtype=np.int64)
    csq = np.zeros((c, m2), dtype=np.int64)
    for i in range(start, stop):
        counts, vec, _ = simulate_checkpoints(walk_generator(seed, i), steps, params, n_max, cps)
        positions[i] = vec[:, 0, :]
        csum += counts
        csq += counts * counts
    return start // BLOCK_SIZE, csum, csq


def run_ensemble(config: EnsembleConfig, steps: StepSet, params: MemoryParams) -> EnsembleResult:
    cps = _as_checkpoints(config.checkpoints, config.n_max)
    N, d, m2 = config.walks, steps.dimension, 2 * steps.m
    positions = np.zeros((N, cps.shape[0], d))
    blocks = [(s, min(s + BLOCK_SIZE, N)) for s in range(0, N, BLOCK_SIZE)]
    workers = min(worker_count(config.workers), len(blocks))
    args = (config.seed, steps, params, config.n_max, cps, positions)

    def job(b):
        return _run_block(b[0], b[1], *args)

    if workers == 1:
        parts = [job(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, blocks))
    # integer sums are exact, so block order cannot matter; python ints rule out overflow
    count_sum = np.zeros((cps.shape[0], m2), dtype=object)
    count_sq = np.zeros((cps.shape[0], m2), dtype=object)
    for _, cs, cq in sorted(parts, key=lambda t: t[0]):
        count_sum += cs.astype(object)
        count_sq += cq.astype(object)

    stats = [
        _checkpoint_stats(int(n), positions[:, j, :], count_sum[j], count_sq[j], N, steps)
        for j, n in enumerate(cps)
    ]
    return EnsembleResult(config, cps, stats, positions)


def _checkpoint_stats(n, S, csum, csq, N, steps) -> CheckpointStats:
    mean_counts = np.array([float(x) / N for x in csum])
    if N > 1:
        # unbiased variance from exact integer sums: (N sum y^2 - (sum y)^2) / (N (N - 1))
        var = np.array([(q * N - s * s) / (N * (N - 1)) for s, q in zip(csum, csq)], dtype=float)
        se_counts = np.sqrt(np.maximum(var, 0.0) / N)
    else:
        se_counts = np.full_like(mean_counts, np.nan)
    expected = expected_position(n, steps)
    mean_S = S.mean(axis=0)
    dev = S - mean_S
    prod = dev[:, :, None] * dev[:, None, :]
    if N > 1:
        cov = prod.sum(axis=0) / (N - 1)
        se_cov = prod.std(axis=0, ddof=1) / math.sqrt(N)
        se_mean = S.std(axis=0, ddof=1) / math.sqrt(N)
    else:
        cov = np.zeros((S.shape[1], S.shape[1]))
        se_cov = np.full_like(cov, np.nan)
        se_mean = np.full(S.shape[1], np.nan)
    sq = np.sum((S - expected) ** 2, axis=1)
    e2 = float(sq.mean())
    se_e2 = float(sq.std(ddof=1) / math.sqrt(N)) if N > 1 else math.nan
    return CheckpointStats(n, N, expected, mean_S, se_mean, cov, se_cov, mean_counts, se_counts, e2, se_e2)


def ensemble_header(d: int, m: int) -> list[str]:
    return (
        ["n"]
        + [f"mean_S_{j + 1}" for j in range(d)]
        + [f"cov_S_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
        + ["e2", "se_e2"]
        + [f"meanY_{i + 1}" for i in range(2 * m)]
    )


def ensemble_rows(stats: list):
    for s in stats:
        yield (
            [s.n]
            + [repr(float(x)) for x in s.mean_S]
            + [repr(float(x)) for x in s.cov_S.ravel()]
            + [repr(s.e2), repr(s.se_e2)]
            + [repr(float(x)) for x in s.mean_counts]
        )


def _band(observed, expected, se, rel_tol):
    tol = np.maximum(rel_tol * np.abs(expected), SE_MULTIPLIER * se)
    return bool(np.all(np.abs(observed - expected) <= tol)), tol


def clt_check(
    stats: CheckpointStats,
    prediction: AsymptoticPrediction,
    samples: np.ndarray | None = None,
    rel_tol: float | None = None,
) -> CheckReport:
    """Compare cov(S_n) / scale(n) with the limit covariance.

    Entry (i, j) passes when within max(rel_tol * |expected|, 4 SE).  The
    relative slack defaults to 5% (diffusive) and 15% (critical, where the
    finite-n bias decays only like 1/log n).  Skewness and excess kurtosis
    of the normalized samples are reported but not judged.
    """
    if prediction.regime == DIFFUSIVE:
        scale, default_rel = float(stats.n), 0.05
    elif prediction.regime == CRITICAL:
        scale, default_rel = stats.n * math.log(stats.n), 0.15
    else:
        raise WrongRegime("no Gaussian limit in the superdiffusive regime")
    rel = default_rel if rel_tol is None else rel_tol
    observed = stats.cov_S / scale
    se = stats.se_cov_S / scale
    ok, tol = _band(observed, prediction.covariance, se, rel)
    obs = {"covariance": observed, "se": se, "n": stats.n, "walks": stats.walks}
    if samples is not None and samples.shape[0] > 2:
        z = (samples - samples.mean(axis=0)) / samples.std(axis=0)
        obs["skewness"] = np.mean(z**3, axis=0)
        obs["excess_kurtosis"] = np.mean(z**4, axis=0) - 3.0
    return CheckReport(f"clt_{prediction.regime}", ok, obs, prediction.covariance, tol)


def superdiffusive_check(
    result: EnsembleResult,
    params: MemoryParams,
    constant: float,
    n: int | None = None,
    rel_tol: float = 0.05,
    min_factor: float = 1.0,
) -> CheckReport:
    """Checks on S_n / n^delta: mean near 0, second moment near C, and a
    doubling diagnostic for almost-sure convergence.

    The diagnostic uses the checkpoints n/4, n/2, n and requires the median
    over walks of |S_{2k}/(2k)^delta - S_k/k^delta| to shrink by more than
    ``min_factor`` from k = n/4 to k = n/2.  It is a finite-sample proxy,
    not a proof of convergence.
    """
    regime = classify_regime(params)
    if regime.kind != SUPERDIFFUSIVE or regime.degenerate or params.gamma >= 1.0:
        raise WrongRegime(f"needs 1/2 < delta < 1 and gamma < 1 (gamma={params.gamma}, delta={params.delta})")
    delta = params.delta
    n = int(result.checkpoints[-1]) if n is None else int(n)
    if n % 4:
        raise ValueError(f"n must be divisible by 4 for the doubling diagnostic, got {n}")
    centering = result.at(n).expected_S
    X = {k: (result.samples(k) - result.at(k).expected_S) / k**delta for k in (n // 4, n // 2, n)}
    L = X[n]
    N = L.shape[0]
    mean = L.mean(axis=0)
    se_mean = L.std(axis=0, ddof=1) / math.sqrt(N)
    sq = np.sum(L**2, axis=1)
    second = float(sq.mean())
    se_second = float(sq.std(ddof=1) / math.sqrt(N))
    mean_ok = bool(np.all(np.abs(mean) <= SE_MULTIPLIER * se_mean))
    second_ok = abs(second - constant) <= rel_tol * constant
    d1 = float(np.median(np.linalg.norm(X[n // 2] - X[n // 4], axis=1)))
    d2 = float(np.median(np.linalg.norm(X[n] - X[n // 2], axis=1)))
    doubling_ok = d2 * min_factor < d1
    observed = {
        "n": n,
        "walks": N,
        "mean": mean,
        "se_mean": se_mean,
        "second_moment": second,
        "se_second_moment": se_second,
        "median_increment": [d1, d2],
        "mean_pass": mean_ok,
        "second_moment_pass": second_ok,
        "doubling_pass": doubling_ok,
        "centering": centering,
    }
    expected = {"mean": np.zeros_like(mean), "second_moment": constant, "median_increment": "decreasing"}
    tolerance = {
        "mean": SE_MULTIPLIER * se_mean,
        "second_moment": rel_tol * constant,
        "doubling_factor": min_factor,
    }
    return CheckReport(
        "superdiffusive_limit", mean_ok and second_ok and doubling_ok, observed, expected, tolerance
    )


def slln_check(snapshots: list, params: MemoryParams, tol: float = 0.01) -> CheckReport:
    """Counts frequencies against 1/(2m) at the last snapshot of a single walk.

    Also reports |S_n| / sqrt(n (log n)^1.5) (diffusive) or
    |S_n| / sqrt(n log n (log log n)^1.5) (critical) at decade checkpoints;
    that path statistic is informational only.
    """
    last = snapshots[-1]
    n, m = last.n, params.m
    freq = np.asarray(last.counts, dtype=float) / n
    dev = float(np.max(np.abs(freq - 1.0 / (2 * m))))
    kind = classify_regime(params).kind
    path = {}
    for s in snapshots:
        if not (_is_decade(s.n) or s.n == n) or s.n < 10:
            continue
        norm = float(np.linalg.norm(s.position))
        if kind == DIFFUSIVE:
            path[s.n] = norm / math.sqrt(s.n * math.log(s.n) ** 1.5)
        elif kind == CRITICAL:
            path[s.n] = norm / math.sqrt(s.n * math.log(s.n) * math.log(math.log(s.n)) ** 1.5)
    vals = [path[k] for k in sorted(path)][-4:]
    observed = {
        "n": n,
        "max_deviation": dev,
        "frequencies": freq,
        "path_statistic": {str(k): v for k, v in sorted(path.items())},
        "path_statistic_decreasing": bool(len(vals) >= 2 and all(b < a for a, b in zip(vals, vals[1:]))),
    }
    return CheckReport("slln_counts", dev < tol, observed, 1.0 / (2 * m), tol)


def _is_decade(n: int) -> bool:
    return n >= 10 and 10 ** round(math.log10(n)) == n
