"""Equilibrium detection across the bifurcation parameter.

Long stochastic runs from a spread of initial conditions are classified by
a settle test on the tail of each trajectory: a trajectory settles when its
final stretch stays within a tolerance band around its endpoint.  Settled
endpoints are merged into clusters, whose means are reported as effective
equilibrium positions.  A sweep runs both the full system and the reduced
model over a list of parameter values with shared noise.

The settle test and the clustering are heuristics: the reported counts are
operational (what these runs, this horizon, and these tolerances resolve),
not a statement about the exact attractor set.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .dynamics import (NewtonError, NewtonOptions, SystemParams, example_system,
                       simulate)
from .manifold import tracking_distance
from .noise import DrivingState, derive_seed, init_stationary, make_path
from .reduction import lift, reduced_drift

__all__ = [
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

DEFAULT_INITIAL_X = (-17.0, -7.5, -6.5, -0.5, 0.5, 6.5, 7.5, 17.0)

#: verify_lift_attraction runs this long and requires the threshold crossing
#: within LIFT_DEADLINE.
LIFT_RUN_TIME = 5.0
LIFT_DEADLINE = 2.5


@dataclass(frozen=True)
class DetectionConfig:
    """Controls equilibrium detection runs.

    ``horizon_extended``, when set, replaces ``horizon`` for parameter
    values a <= extend_threshold: with no linear restoring term the
    relaxation and escape times grow like 1/(eps |a|), so those runs need
    far longer horizons.  When it is unset and nothing settles or diverges,
    detection raises InconclusiveError suggesting a longer horizon instead
    of silently extending the run.
    """

    initial_x: tuple[float, ...] = DEFAULT_INITIAL_X
    initial_y: float = -1.0
    dt: float = 0.01
    horizon: float = 2000.0
    settle_window: float = 200.0
    settle_tol: float = 0.05
    cluster_gap: float = 1.0
    escape_window: tuple[float, float] = (-50.0, 50.0)
    thin: int = 100
    horizon_extended: float | None = None
    extend_threshold: float = 0.001

    def __post_init__(self) -> None:
        if len(self.initial_x) == 0:
            raise ValueError("initial_x must be non-empty")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.horizon > self.settle_window > 0.0:
            raise ValueError(
                f"need horizon > settle_window > 0, got horizon={self.horizon}, "
                f"settle_window={self.settle_window}")
        if self.settle_tol <= 0.0:
            raise ValueError("settle_tol must be positive")
        if self.cluster_gap <= 0.0:
            raise ValueError("cluster_gap must be positive")
        lo, hi = self.escape_window
        if not lo < hi:
            raise ValueError(f"escape_window must satisfy lo < hi, got {self.escape_window}")
        if int(self.thin) < 1:
            raise ValueError(f"thin must be at least 1, got {self.thin}")
        if self.horizon_extended is not None and self.horizon_extended <= self.horizon:
            raise ValueError("horizon_extended must exceed horizon")


@dataclass(frozen=True)
class EquilibriumReport:
    """Detection outcome at one parameter value: cluster count, sorted
    representative positions, and how many trajectories diverged or failed
    to settle.  ``horizon`` is the horizon actually used."""

    a: float
    count: int
    positions: tuple[float, ...]
    divergent: int
    unsettled: int
    horizon: float


@dataclass(frozen=True)
class SweepEntry:
    """Per-parameter sweep results for both systems; a system's report is
    None when its detection was inconclusive, with the reason alongside."""

    a: float
    full: EquilibriumReport | None
    reduced: EquilibriumReport | None
    full_error: str | None = None
    reduced_error: str | None = None


@dataclass(frozen=True)
class BifurcationReport:
    entries: tuple[SweepEntry, ...]
    seed: int
    params: SystemParams
    config: DetectionConfig


@dataclass(frozen=True)
class LiftAttractionReport:
    """Outcome of the lift-attraction check: when each perturbed run first
    re-entered the tracking threshold 2 * perturbation / e."""

    a: float
    perturbation: float
    threshold: float
    equilibrium: float
    times_to_threshold: tuple[float | None, float | None]
    final_distances: tuple[float, float]
    deadline: float
    passed: bool


class InconclusiveError(RuntimeError):
    """No trajectory settled or diverged within the horizon."""

    def __init__(self, a: float, horizon: float, suggested: float):
        super().__init__(
            f"detection inconclusive at a={a}: no trajectory settled or diverged "
            f"within horizon {horizon:g}; rerun with horizon >= {suggested:g} "
            f"(or set horizon_extended)")
        self.a = a
        self.horizon = horizon
        self.suggested = suggested


def _cluster(sorted_finals: list[float], gap: float) -> list[float]:
    """Greedy merge of sorted settled endpoints closer than gap."""
    clusters: list[list[float]] = []
    for value in sorted_finals:
        if clusters and value - clusters[-1][-1] < gap:
            clusters[-1].append(value)
        else:
            clusters.append([value])
    return [float(np.mean(c)) for c in clusters]


def _horizon_for(a: float, config: DetectionConfig) -> float:
    if config.horizon_extended is not None and a <= config.extend_threshold:
        return config.horizon_extended
    return config.horizon


def detect_equilibria(kind: str, a: float, params: SystemParams,
                      config: DetectionConfig | None = None, seed: int = 0) -> EquilibriumReport:
    """Classify the long-run behaviour of one system at one parameter value.

    ``kind`` selects the system: "full" (two-variable, drift-implicit
    steps) or "reduced" (scalar reduced model, explicit steps).  Trajectory
    i uses the noise path seeded by (seed, trajectory index), so the full
    and reduced runs at equal seeds share their driving noise.
    """
    if kind not in ("full", "reduced"):
        raise ValueError(f"kind must be 'full' or 'reduced', got {kind!r}")
    cfg = config or DetectionConfig()
    p = replace(params, a=float(a))
    horizon = _horizon_for(p.a, cfg)
    lo, hi = cfg.escape_window
    newton = NewtonOptions()
    spacing = cfg.dt * cfg.thin
    window_samples = max(1, int(round(cfg.settle_window / spacing)))
    finals: list[float] = []
    divergent = 0
    unsettled = 0
    for i, x0 in enumerate(cfg.initial_x):
        path = make_path(derive_seed(seed, 0, i), 0.0, horizon, cfg.dt)
        if kind == "full":
            xs, status, fail_step, residual = _kernels.detect_full(
                float(x0), cfg.initial_y, path.increments, p.eps, p.sigma, p.a,
                cfg.dt, newton.tol, newton.max_iters, lo, hi, int(cfg.thin))
            if status == _kernels.STATUS_NEWTON_FAIL:
                raise NewtonError(
                    f"implicit step failed at a={p.a}, trajectory {i}, step "
                    f"{fail_step} (residual {residual:.3g})",
                    step=fail_step, residual=residual)
        else:
            drv0 = init_stationary(derive_seed(seed, 1, i), p.sigma)
            xs, status, fail_step = _kernels.detect_reduced(
                float(x0), path.increments, p.eps, p.sigma, p.a, cfg.dt,
                lo, hi, int(cfg.thin), drv0.J, drv0.I)
        if status == _kernels.STATUS_DIVERGED:
            divergent += 1
            continue
        tail = xs[-(window_samples + 1):]
        if float(np.max(np.abs(tail - xs[-1]))) <= cfg.settle_tol:
            finals.append(float(xs[-1]))
        else:
            unsettled += 1
    if not finals and divergent == 0:
        raise InconclusiveError(p.a, horizon, suggested=max(20000.0, 10.0 * horizon))
    positions = _cluster(sorted(finals), cfg.cluster_gap)
    return EquilibriumReport(a=p.a, count=len(positions), positions=tuple(positions),
                             divergent=divergent, unsettled=unsettled, horizon=horizon)


def sweep(a_values, params: SystemParams, config: DetectionConfig | None = None,
          seed: int = 0, threads: int = 1) -> BifurcationReport:
    """Detect equilibria for both systems across parameter values.

    Inconclusive detections become per-entry error strings; the sweep
    itself always completes (numerical failures still raise).
    """
    cfg = config or DetectionConfig()
    a_list = [float(a) for a in a_values]
    tasks = [(a, kind) for a in a_list for kind in ("full", "reduced")]

    def run(task):
        a, kind = task
        try:
            return detect_equilibria(kind, a, params, cfg, seed), None
        except InconclusiveError as err:
            return None, str(err)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = dict(zip(tasks, pool.map(run, tasks)))
    else:
        outcomes = {task: run(task) for task in tasks}
    entries = []
    for a in a_list:
        full_report, full_error = outcomes[(a, "full")]
        reduced_report, reduced_error = outcomes[(a, "reduced")]
        entries.append(SweepEntry(a=a, full=full_report, reduced=reduced_report,
                                  full_error=full_error, reduced_error=reduced_error))
    return BifurcationReport(entries=tuple(entries), seed=seed, params=params, config=cfg)


def deterministic_equilibrium(params: SystemParams) -> float:
    """Root of the noise-free reduced drift nearest zero, by bisection."""
    quiet = DrivingState(0.0, 0.0, 0.0)

    def f(x: float) -> float:
        return reduced_drift(x, quiet, params)

    grid = np.linspace(-20.0, 20.0, 1601)
    values = np.array([f(x) for x in grid])
    brackets = []
    for k in range(grid.shape[0] - 1):
        if values[k] == 0.0:
            brackets.append((grid[k], grid[k]))
        elif values[k] * values[k + 1] < 0.0:
            brackets.append((grid[k], grid[k + 1]))
    if not brackets:
        raise ValueError(f"no equilibrium of the reduced drift found for {params}")
    lo, hi = min(brackets, key=lambda b: abs(0.5 * (b[0] + b[1])))
    if lo == hi:
        return float(lo)
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0:
            return float(mid)
        if flo * fmid < 0.0:
            hi = mid
        else:
            lo = mid
            flo = fmid
    return float(0.5 * (lo + hi))


def verify_lift_attraction(a: float, params: SystemParams,
                           config: DetectionConfig | None = None, seed: int = 0,
                           perturbation: float = 0.3) -> LiftAttractionReport:
    """Check that full trajectories started off the lifted equilibrium fall
    back to the manifold.

    The fast variable is perturbed by +/- perturbation around the lifted
    deterministic equilibrium; each run must bring the order-1 tracking
    distance below 2 * perturbation / e within LIFT_DEADLINE time units.
    """
    if perturbation <= 0.0:
        raise ValueError(f"perturbation must be positive, got {perturbation}")
    cfg = config or DetectionConfig()
    p = replace(params, a=float(a))
    x_star = deterministic_equilibrium(p)
    threshold = 2.0 * perturbation * math.exp(-1.0)
    system = example_system(p)
    hit_times: list[float | None] = []
    final_distances: list[float] = []
    for k, sign in enumerate((1.0, -1.0)):
        path = make_path(derive_seed(seed, 2, 2 * k), 0.0, LIFT_RUN_TIME, cfg.dt)
        drv0 = init_stationary(derive_seed(seed, 2, 2 * k + 1), p.sigma)
        y0 = float(lift(x_star, drv0, p, order=1)[1]) + sign * perturbation
        trajectory = simulate(system, (x_star, y0), path, scheme="implicit",
                              window=cfg.escape_window, driving=drv0)
        distances = tracking_distance(trajectory, 1, p)
        below = np.nonzero(distances[:, 1] <= threshold)[0]
        hit_times.append(float(distances[below[0], 0]) if below.size else None)
        final_distances.append(float(distances[-1, 1]))
    passed = all(h is not None and h <= LIFT_DEADLINE for h in hit_times)
    return LiftAttractionReport(
        a=p.a, perturbation=perturbation, threshold=threshold, equilibrium=x_star,
        times_to_threshold=(hit_times[0], hit_times[1]),
        final_distances=(final_distances[0], final_distances[1]),
        deadline=LIFT_DEADLINE, passed=passed)
