"""Elephant random walks on bipartite lattices with disjoint odd/even step sets."""

from .dynamics import WalkState, advance, initial_state, run_walk, step_law
from .ensemble import EnsembleConfig, run_ensemble
from .lattice import (
    MemoryParams,
    StepSet,
    builtin_lattice,
    classify_regime,
    derive_memory_params,
    validate_step_set,
)
from .moments import limit_constants, second_moment_recursion, superdiffusive_constant

__version__ = "0.1.0"

__all__ = [
    "EnsembleConfig",
    "MemoryParams",
    "StepSet",
    "WalkState",
    "advance",
    "builtin_lattice",
    "classify_regime",
    "derive_memory_params",
    "initial_state",
    "limit_constants",
    "run_ensemble",
    "run_walk",
    "second_moment_recursion",
    "step_law",
    "superdiffusive_constant",
    "validate_step_set",
]
