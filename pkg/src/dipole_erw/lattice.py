"""Step sets, memory parameters and regime classification.

A lattice is described by its odd steps ``v_1..v_m``; the even steps are
their negations, indexed ``v_{m+i} = -v_i``.  Only the disjoint case is
supported: no odd step may be the negation of another odd step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateVector,
    EmptySet,
    LatticeFileError,
    OutOfRange,
    OverlapViolation,
    UnknownName,
    ZeroVector,
)

VECTOR_ATOL = 1e-12
# delta is compared to 1/2 with this slack; p, q read from decimal input
# rarely land on 1/2 exactly.
CRITICAL_ATOL = 1e-12

DIFFUSIVE = "diffusive"
CRITICAL = "critical"
SUPERDIFFUSIVE = "superdiffusive"

GAMMA_IS_ONE = "gamma_is_one"
DELTA_IS_ONE = "delta_is_one"


@dataclass(frozen=True)
class StepSet:
    """Odd step vectors of a bipartite lattice (rows of ``odd``)."""

    odd: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.odd, dtype=float, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "odd", arr)

    @property
    def m(self) -> int:
        return self.odd.shape[0]

    @property
    def dimension(self) -> int:
        return self.odd.shape[1]

    @property
    def vectors(self) -> np.ndarray:
        """All 2m steps as rows: odd steps first, then their negations."""
        return np.vstack([self.odd, -self.odd])

    @property
    def matrix(self) -> np.ndarray:
        """The d x 2m matrix whose columns are the steps."""
        return self.vectors.T

    @property
    def disjoint(self) -> bool:
        """False when some odd step is the negation of another odd step."""
        odd = self.odd
        return not any(
            _close(odd[i], -odd[j]) for i in range(self.m) for j in range(i + 1, self.m)
        )

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "odd_steps": self.odd.tolist()}

    def __repr__(self):
        return f"StepSet(m={self.m}, d={self.dimension}, odd={self.odd.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, StepSet):
            return NotImplemented
        return self.odd.shape == other.odd.shape and bool(np.all(self.odd == other.odd))

    def __hash__(self):
        return hash((self.odd.shape, self.odd.tobytes()))


@dataclass(frozen=True)
class MemoryParams:
    p: float
    q: float
    m: int
    alpha: float
    beta: float
    gamma: float
    delta: float


@dataclass(frozen=True)
class Regime:
    kind: str
    degenerate_flags: frozenset = frozenset()

    @property
    def degenerate(self) -> bool:
        return bool(self.degenerate_flags)


def _close(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(np.abs(a - b) <= VECTOR_ATOL))


def validate_step_set(raw_vectors: Iterable[Sequence[float]]) -> StepSet:
    rows = [np.atleast_1d(np.asarray(v, dtype=float)) for v in raw_vectors]
    if len(rows) < 2:
        raise EmptySet(f"need at least two odd steps, got {len(rows)}")
    dims = {r.shape for r in rows}
    if len(dims) != 1 or rows[0].ndim != 1 or rows[0].shape[0] < 1:
        raise DimensionMismatch(f"step vectors have inconsistent shapes {sorted(dims)}")
    if not all(np.all(np.isfinite(r)) for r in rows):
        raise ZeroVector("step vectors must be finite")
    for i, v in enumerate(rows):
        if _close(v, 0.0):
            raise ZeroVector(f"step {i + 1} is the zero vector")
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            if _close(rows[i], rows[j]):
                raise DuplicateVector(f"steps {i + 1} and {j + 1} coincide")
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            if _close(rows[i], -rows[j]):
                raise OverlapViolation(
                    f"step {j + 1} is the negation of step {i + 1}; "
                    "odd and even step sets must be disjoint"
                )
    return StepSet(np.vstack(rows))


def derive_memory_params(p: float, q: float, m: int) -> MemoryParams:
    if int(m) != m or m < 2:
        raise OutOfRange(f"m must be an integer >= 2, got {m}")
    m = int(m)
    for name, val in (("p", p), ("q", q)):
        if not (0.0 <= val <= 1.0) or math.isnan(val):
            raise OutOfRange(f"{name} must lie in [0, 1], got {val}")
    alpha = (m * p - 1.0) / (m - 1.0)
    beta = (m * q - 1.0) / (m - 1.0)
    return MemoryParams(
        p=float(p),
        q=float(q),
        m=m,
        alpha=alpha,
        beta=beta,
        gamma=(alpha + beta) / 2.0,
        delta=(alpha - beta) / 2.0,
    )


def classify_regime(params: MemoryParams) -> Regime:
    flags = set()
    if params.gamma == 1.0:
        flags.add(GAMMA_IS_ONE)
    if params.delta == 1.0:
        flags.add(DELTA_IS_ONE)
    if abs(params.delta - 0.5) <= CRITICAL_ATOL:
        kind = CRITICAL
    elif params.delta < 0.5:
        kind = DIFFUSIVE
    else:
        kind = SUPERDIFFUSIVE
    return Regime(kind, frozenset(flags))


def admissible_range(params: MemoryParams) -> bool:
    """Check -1/(m-1) <= gamma +/- delta <= 1 (with float slack)."""
    lo = -1.0 / (params.m - 1) - 1e-12
    hi = 1.0 + 1e-12
    return all(lo <= x <= hi for x in (params.gamma + params.delta, params.gamma - params.delta))


def mean_odd_step(steps: StepSet) -> np.ndarray:
    return steps.odd.mean(axis=0)


_SQRT3_2 = math.sqrt(3.0) / 2.0

_BUILTINS = {
    "hexagonal": [(1.0, 0.0), (-0.5, _SQRT3_2), (-0.5, -_SQRT3_2)],
    "brick_wall": [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0)],
    "distorted_hexagonal": [(1.0, 0.0), (0.5, 1.0), (0.0, 0.5)],
    "two_step_line": [(1.0,), (2.0,)],
}

BUILTIN_NAMES = tuple(_BUILTINS)


# brick_wall has odd steps {+e1, -e1, +e2}, so +-e1 are shared between the
# two classes.  It is kept as a geometry example and built without the
# disjointness check; validate_step_set rejects the same vectors.
_OVERLAPPING_BUILTINS = {"brick_wall"}


def builtin_lattice(name: str) -> StepSet:
    try:
        vectors = _BUILTINS[name]
    except KeyError:
        raise UnknownName(f"unknown lattice {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None
    if name in _OVERLAPPING_BUILTINS:
        return StepSet(np.array(vectors, dtype=float))
    return validate_step_set(vectors)


def parse_lattice_json(text: str) -> StepSet:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LatticeFileError(f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise LatticeFileError("lattice file must hold a JSON object")
    unknown = set(data) - {"dimension", "odd_steps"}
    if unknown:
        raise LatticeFileError(f"unknown fields: {sorted(unknown)}")
    missing = {"dimension", "odd_steps"} - set(data)
    if missing:
        raise LatticeFileError(f"missing fields: {sorted(missing)}")
    dim = data["dimension"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise LatticeFileError("dimension must be a positive integer")
    vectors = data["odd_steps"]
    if not isinstance(vectors, list):
        raise LatticeFileError("odd_steps must be a list of vectors")
    for v in vectors:
        if not isinstance(v, list) or len(v) != dim:
            raise DimensionMismatch(f"every odd step must have {dim} coordinates")
    return validate_step_set(vectors)


def load_lattice_file(path: str | Path) -> StepSet:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise LatticeFileError(f"cannot read lattice file: {exc}") from None
    return parse_lattice_json(text)
