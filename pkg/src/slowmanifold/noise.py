"""Brownian paths and the Ornstein-Uhlenbeck driving triple (z, J, I).

The fast channel of the system is driven by a Brownian motion B.  Three
derived processes feed everything downstream:

* ``J`` solves ``dJ = -2 J dt + dB`` (unit-amplitude Ornstein-Uhlenbeck),
* ``z = sigma * J`` is the physical driving noise,
* ``I`` solves ``dI = (-2 I - J) dt`` and equals the exponentially weighted
  history integral ``int_{-inf}^{t} (s - t) e^{2(s - t)} dB_s`` that the
  first-order manifold correction needs.

Both recurrences advance by explicit Euler on the path grid, regardless of
the scheme used for the system state, so a path of increments determines
(z, J, I) reproducibly, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
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
]

#: Stationary covariance of the unit-noise pair (J, I).  The Ito isometry
#: applied to J(t) = int_{-inf}^t e^{2(s-t)} dB_s and
#: I(t) = int_{-inf}^t (s-t) e^{2(s-t)} dB_s gives
#: Var J = 1/4, Var I = 1/32, Cov(J, I) = -1/16.
STATIONARY_COV = np.array([[0.25, -0.0625], [-0.0625, 0.03125]])

_MAX_SEED = 2**64


@dataclass(frozen=True)
class NoisePath:
    """Brownian increments on a uniform grid over [t_start, t_end].

    ``increments[k] ~ N(0, dt)`` is the increment of B over
    ``[t_start + k dt, t_start + (k+1) dt)``.
    """

    seed: int
    t_start: float
    t_end: float
    dt: float
    increments: np.ndarray

    @property
    def n_steps(self) -> int:
        return int(self.increments.shape[0])

    @property
    def times(self) -> np.ndarray:
        """Left edge of each increment interval."""
        return self.t_start + self.dt * np.arange(self.n_steps)


@dataclass(frozen=True)
class DrivingState:
    """The driving triple at one instant, with z = sigma * J by construction."""

    z: float
    J: float
    I: float


@dataclass(frozen=True)
class DrivingPath:
    """The driving triple sampled along a uniform grid.

    ``J`` and ``I`` have one entry per grid point (increments + 1); the
    physical noise is ``z = sigma * J``.
    """

    t: np.ndarray
    J: np.ndarray
    I: np.ndarray
    sigma: float

    def __post_init__(self) -> None:
        if not (self.t.shape == self.J.shape == self.I.shape):
            raise ValueError("t, J, I must have identical shapes")
        if self.t.shape[0] < 2:
            raise ValueError("a driving path needs at least two samples")

    @property
    def z(self) -> np.ndarray:
        return self.sigma * self.J

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def end_state(self) -> DrivingState:
        j = float(self.J[-1])
        return DrivingState(z=self.sigma * j, J=j, I=float(self.I[-1]))


@dataclass(frozen=True)
class StationaryInit:
    """How to draw the initial driving state.

    ``exact-gaussian`` samples (J, I) from their joint stationary Gaussian
    law; ``truncated-past`` integrates the recurrences from rest over
    [-past_horizon, 0] with step ``dt``, which reproduces the stationary law
    up to the Euler discretisation bias of the recurrence itself.
    """

    mode: str = "exact-gaussian"
    past_horizon: float = 14.0
    dt: float = 0.01

    def __post_init__(self) -> None:
        if self.mode not in ("exact-gaussian", "truncated-past"):
            raise ValueError(
                f"mode must be 'exact-gaussian' or 'truncated-past', got {self.mode!r}"
            )
        if self.past_horizon <= 0.0 or self.dt <= 0.0:
            raise ValueError("past_horizon and dt must be positive")


def _check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= int(seed) < _MAX_SEED:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return int(seed)


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def make_path(seed: int, t_start: float, t_end: float, dt: float) -> NoisePath:
    """Sample a Brownian increment path on a uniform grid.

    The grid must tile [t_start, t_end] exactly: (t_end - t_start) / dt has
    to be a whole number of steps.
    """
    seed = _check_seed(seed)
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_end <= t_start:
        raise ValueError(f"need t_end > t_start, got [{t_start}, {t_end}]")
    span = t_end - t_start
    n = int(round(span / dt))
    if n < 1 or abs(n * dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(f"dt={dt} does not tile [{t_start}, {t_end}] evenly")
    increments = _generator(seed).standard_normal(n) * np.sqrt(dt)
    return NoisePath(seed=seed, t_start=t_start, t_end=t_end, dt=dt, increments=increments)


def derive_seed(master_seed: int, namespace: int, index: int) -> int:
    """Deterministic child seed for the stream (namespace, index).

    Distinct (namespace, index) pairs give statistically independent
    streams under the same master seed.  The package reserves namespace 0
    for per-trajectory noise paths, 1 for driving initialisation, and 2 for
    auxiliary runs.
    """
    _check_seed(master_seed)
    ss = np.random.SeedSequence(master_seed, spawn_key=(namespace, index))
    return int(ss.generate_state(1, np.uint64)[0])


def init_stationary(seed: int, sigma: float, init: StationaryInit | None = None) -> DrivingState:
    """Draw an initial driving state from (an approximation of) the
    stationary law of (J, I)."""
    if sigma < 0.0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    init = StationaryInit() if init is None else init
    if init.mode == "exact-gaussian":
        # Cholesky factor of STATIONARY_COV: L = [[1/2, 0], [-1/8, 1/8]].
        n1, n2 = _generator(_check_seed(seed)).standard_normal(2)
        j = 0.5 * n1
        i = 0.125 * (n2 - n1)
        return DrivingState(z=sigma * j, J=j, I=i)
    path = make_path(seed, -init.past_horizon, 0.0, init.dt)
    state = DrivingState(0.0, 0.0, 0.0)
    for dw in path.increments:
        state = step_driving(state, float(dw), path.dt, sigma)
    return state


def step_driving(state: DrivingState, dw: float, dt: float, sigma: float) -> DrivingState:
    """One explicit Euler step of the driving recurrences.

    J' = J - 2 J dt + dw,  I' = I + (-2 I - J) dt,  z' = sigma * J'.
    """
    j = state.J + (-2.0 * state.J) * dt + dw
    i = state.I + (-2.0 * state.I - state.J) * dt
    return DrivingState(z=sigma * j, J=j, I=i)


def evolve_driving(state: DrivingState, path: NoisePath, sigma: float) -> DrivingPath:
    """Evolve the driving recurrences along a whole noise path.

    Step-for-step identical to repeated ``step_driving``; the compiled loop
    exists for long paths.
    """
    from . import _kernels

    j_arr, i_arr = _kernels.evolve_driving_arrays(
        float(state.J), float(state.I), path.increments, path.dt
    )
    t = path.t_start + path.dt * np.arange(j_arr.shape[0])
    return DrivingPath(t=t, J=j_arr, I=i_arr, sigma=sigma)
