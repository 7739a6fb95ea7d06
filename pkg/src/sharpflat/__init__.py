"""Micro-macro decompositions for linear ODEs driven by quasi-periodic plus decaying forcing."""

from .algebra import ExpTrigPoly, FrequencyVector
from .averaging import (
    EpsSeries,
    MatrixSeries,
    MicroMacroDecomposition,
    SharpFlatField,
    epsilon_threshold,
    iterate,
    lambda_op,
    verify_bounds,
)
from .errors import (
    ClosureError,
    GridMismatchError,
    InsufficientDataError,
    ModeCapError,
    NonZeroMeanError,
    ResonanceError,
    StabilityError,
)
from .integrators import (
    MicroMacroState,
    Scheme,
    Trajectory,
    initial_state,
    reconstruct,
    solve_direct,
    solve_micro_macro,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "ClosureError",
    "EpsSeries",
    "ExpTrigPoly",
    "FrequencyVector",
    "GridMismatchError",
    "InsufficientDataError",
    "MatrixSeries",
    "MicroMacroDecomposition",
    "MicroMacroState",
    "ModeCapError",
    "NonZeroMeanError",
    "ResonanceError",
    "Scheme",
    "SharpFlatField",
    "StabilityError",
    "Trajectory",
    "epsilon_threshold",
    "initial_state",
    "iterate",
    "lambda_op",
    "reconstruct",
    "solve_direct",
    "solve_micro_macro",
    "step",
    "verify_bounds",
]
