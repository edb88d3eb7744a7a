"""Slow-manifold reduction toolkit for a noisy slow-fast system.

The package simulates a two-variable stochastic slow-fast system, evaluates
stochastic slow-manifold expansions and their self-consistent oracle,
integrates the induced scalar reduced model, and detects effective
equilibria across a bifurcation-parameter sweep.
"""

__version__ = "0.1.0"

from .noise import (
    STATIONARY_COV,
    DrivingPath,
    DrivingState,
    NoisePath,
    StationaryInit,
    derive_seed,
    evolve_driving,
    init_stationary,
    make_path,
    step_driving,
)
from .dynamics import (
    NewtonError,
    NewtonOptions,
    SlowFastSystem,
    SystemParams,
    Trajectory,
    em_step,
    example_system,
    implicit_em_step,
    simulate,
    transformed_system,
)
from .manifold import (
    LPOracleConfig,
    ManifoldEval,
    OracleError,
    OracleResult,
    driving_history,
    evaluate_manifold,
    h_order0,
    h_order1,
    lp_oracle,
    tracking_distance,
)
from .reduction import ReducedState, lift, reduced_drift, simulate_reduced
from .bifurcation import (
    BifurcationReport,
    DetectionConfig,
    EquilibriumReport,
    InconclusiveError,
    LiftAttractionReport,
    SweepEntry,
    detect_equilibria,
    deterministic_equilibrium,
    sweep,
    verify_lift_attraction,
)

__all__ = [
    "__version__",
    "STATIONARY_COV",
    "NoisePath",
    "DrivingState",
    "DrivingPath",
    "StationaryInit",
    "make_path",
    "derive_seed",
    "init_stationary",
    "step_driving",
    "evolve_driving",
    "SystemParams",
    "SlowFastSystem",
    "Trajectory",
    "NewtonOptions",
    "NewtonError",
    "example_system",
    "transformed_system",
    "em_step",
    "implicit_em_step",
    "simulate",
    "ManifoldEval",
    "LPOracleConfig",
    "OracleResult",
    "OracleError",
    "h_order0",
    "h_order1",
    "evaluate_manifold",
    "lp_oracle",
    "driving_history",
    "tracking_distance",
    "ReducedState",
    "reduced_drift",
    "simulate_reduced",
    "lift",
    "DetectionConfig",
    "EquilibriumReport",
    "SweepEntry",
    "BifurcationReport",
    "LiftAttractionReport",
    "InconclusiveError",
    "detect_equilibria",
    "sweep",
    "verify_lift_attraction",
    "deterministic_equilibrium",
]
