"""Slow-fast stochastic systems and Euler-Maruyama steppers.

The example system is

    dx = -eps (a x + y / (1 + x^2)) dt            (slow)
    dy = (-2 y - sin x) dt + sigma dB_t           (fast)

Subtracting the driving process z from the fast variable (y = v + z) gives
the transformed system, which carries no noise of its own but reads z as an
external input:

    du = -eps (a u + (v + z) / (1 + u^2)) dt
    dv = (-2 v - sin u) dt

Both explicit and drift-implicit Euler-Maruyama steps are provided; the
implicit variant keeps the noise increment explicit and solves the drift
relation with Newton.  Matching explicit runs of the two systems reproduce
each other exactly, step by step, when they share the noise path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .noise import DrivingState, NoisePath, step_driving

__all__ = [
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
]

DEFAULT_WINDOW = (-50.0, 50.0)


@dataclass(frozen=True)
class SystemParams:
    """Model parameters: time-scale ratio eps, noise amplitude sigma,
    bifurcation parameter a."""

    eps: float = 0.01
    sigma: float = 0.1
    a: float = 0.0

    def __post_init__(self) -> None:
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.sigma >= 0.0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


#: Drift callables take (x, y, params, z) with z the external driving value;
#: autonomous systems ignore z.
DriftFn = Callable[[float, float, SystemParams, float], float]


@dataclass(frozen=True)
class SlowFastSystem:
    """A system with a slow block, a fast block, and additive noise on the
    fast block only.

    ``dims = (m, n)`` counts slow and fast variables; the state vector
    stacks the slow block first.  ``fast_noise`` is the amplitude in front
    of the Brownian increment.  ``jacobian``, when given, returns the 2x2
    drift Jacobian ((dfx/dx, dfx/dy), (dfy/dx, dfy/dy)); otherwise implicit
    steps fall back to finite differences.  ``kernel`` tags systems with a
    compiled fast path.
    """

    params: SystemParams
    slow_drift: DriftFn | None
    fast_drift: DriftFn
    fast_noise: float
    dims: tuple[int, int] = (1, 1)
    jacobian: Callable[..., tuple] | None = None
    uses_driving: bool = False
    kernel: str | None = None

    @property
    def dim(self) -> int:
        return self.dims[0] + self.dims[1]


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled trajectory.

    ``states`` holds one row per sample.  ``driving``, when recorded, holds
    the aligned (z, J, I) triple per row.  A run that produced a non-finite
    sample or left the window is truncated to its last good sample and
    flagged ``divergent``.
    """

    t0: float
    dt: float
    states: np.ndarray
    driving: np.ndarray | None = None
    divergent: bool = False

    def __len__(self) -> int:
        return int(self.states.shape[0])

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])


@dataclass(frozen=True)
class NewtonOptions:
    """Convergence control for the drift-implicit solve: the iteration
    stops once the step residual falls below ``tol`` (sup norm)."""

    tol: float = 1e-12
    max_iters: int = 50

    def __post_init__(self) -> None:
        if self.tol <= 0.0 or self.max_iters < 1:
            raise ValueError("tol must be positive and max_iters at least 1")


class NewtonError(RuntimeError):
    """The drift-implicit Newton solve failed to reach tolerance."""

    def __init__(self, message: str, step: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.step = step
        self.residual = residual


def example_system(params: SystemParams) -> SlowFastSystem:
    """The noisy slow-fast example system."""

    def slow(x: float, y: float, p: SystemParams, z: float = 0.0) -> float:
        return -p.eps * (p.a * x + y / (1.0 + x * x))

    def fast(x: float, y: float, p: SystemParams, z: float = 0.0) -> float:
        return -2.0 * y - math.sin(x)

    def jac(x: float, y: float, p: SystemParams, z: float = 0.0) -> tuple:
        den = 1.0 + x * x
        return (
            (-p.eps * (p.a - 2.0 * x * y / (den * den)), -p.eps / den),
            (-math.cos(x), -2.0),
        )

    return SlowFastSystem(
        params=params,
        slow_drift=slow,
        fast_drift=fast,
        fast_noise=params.sigma,
        dims=(1, 1),
        jacobian=jac,
        uses_driving=False,
        kernel="example",
    )


def transformed_system(params: SystemParams) -> SlowFastSystem:
    """The conjugate noise-free system in (u, v) = (x, y - z) variables.

    The driving value z enters the slow drift as an external input, so
    simulations of this system need an initial DrivingState.
    """

    def slow(u: float, v: float, p: SystemParams, z: float = 0.0) -> float:
        return -p.eps * (p.a * u + (v + z) / (1.0 + u * u))

    def fast(u: float, v: float, p: SystemParams, z: float = 0.0) -> float:
        return -2.0 * v - math.sin(u)

    def jac(u: float, v: float, p: SystemParams, z: float = 0.0) -> tuple:
        den = 1.0 + u * u
        return (
            (-p.eps * (p.a - 2.0 * u * (v + z) / (den * den)), -p.eps / den),
            (-math.cos(u), -2.0),
        )

    return SlowFastSystem(
        params=params,
        slow_drift=slow,
        fast_drift=fast,
        fast_noise=0.0,
        dims=(1, 1),
        jacobian=jac,
        uses_driving=True,
        kernel="transformed",
    )


def _split_state(state, system: SlowFastSystem) -> np.ndarray:
    s = np.asarray(state, dtype=float).reshape(-1)
    if s.shape[0] != system.dim:
        raise ValueError(f"state has length {s.shape[0]}, system needs {system.dim}")
    return s


def em_step(state, system: SlowFastSystem, dw: float, dt: float, z: float = 0.0) -> np.ndarray:
    """One explicit Euler-Maruyama step; noise enters the fast block only."""
    s = _split_state(state, system)
    p = system.params
    if system.dims == (1, 1):
        x, y = s
        fx = system.slow_drift(x, y, p, z)
        fy = system.fast_drift(x, y, p, z)
        return np.array([x + dt * fx, y + dt * fy + system.fast_noise * dw])
    if system.dims == (0, 1):
        y = s[0]
        fy = system.fast_drift(0.0, y, p, z)
        return np.array([y + dt * fy + system.fast_noise * dw])
    raise ValueError(f"unsupported dims {system.dims}")


def _fd_jacobian(system: SlowFastSystem, x: float, y: float, p: SystemParams, z: float) -> tuple:
    hx = 1e-6 * (1.0 + abs(x))
    hy = 1e-6 * (1.0 + abs(y))
    fx0 = system.slow_drift(x, y, p, z)
    fy0 = system.fast_drift(x, y, p, z)
    return (
        ((system.slow_drift(x + hx, y, p, z) - fx0) / hx,
         (system.slow_drift(x, y + hy, p, z) - fx0) / hy),
        ((system.fast_drift(x + hx, y, p, z) - fy0) / hx,
         (system.fast_drift(x, y + hy, p, z) - fy0) / hy),
    )


def implicit_em_step(state, system: SlowFastSystem, dw: float, dt: float,
                     z: float = 0.0, newton: NewtonOptions | None = None) -> np.ndarray:
    """One drift-implicit Euler-Maruyama step.

    Only the drift is implicit; the noise increment and the driving value z
    stay at their start-of-step values.  Newton starts from the explicit
    predictor and stops when the step residual drops below ``newton.tol``.
    """
    opts = newton or NewtonOptions()
    s = _split_state(state, system)
    p = system.params
    if system.dims == (1, 1):
        x, y = s
        cand = em_step(s, system, dw, dt, z)
        x1, y1 = cand
        res = math.inf
        for _ in range(opts.max_iters):
            g1 = x1 - x - dt * system.slow_drift(x1, y1, p, z)
            g2 = y1 - y - dt * system.fast_drift(x1, y1, p, z) - system.fast_noise * dw
            res = max(abs(g1), abs(g2))
            if res < opts.tol:
                return np.array([x1, y1])
            if system.jacobian is not None:
                (dxx, dxy), (dyx, dyy) = system.jacobian(x1, y1, p, z)
            else:
                (dxx, dxy), (dyx, dyy) = _fd_jacobian(system, x1, y1, p, z)
            a11 = 1.0 - dt * dxx
            a12 = -dt * dxy
            a21 = -dt * dyx
            a22 = 1.0 - dt * dyy
            det = a11 * a22 - a12 * a21
            if det == 0.0:
                raise NewtonError("singular Newton matrix in implicit step", residual=res)
            x1 += (-g1 * a22 + g2 * a12) / det
            y1 += (-g2 * a11 + g1 * a21) / det
        raise NewtonError(
            f"implicit step did not reach tol={opts.tol} within "
            f"{opts.max_iters} iterations (residual {res:.3g})",
            residual=res,
        )
    if system.dims == (0, 1):
        y = s[0]
        y1 = float(em_step(s, system, dw, dt, z)[0])
        res = math.inf
        for _ in range(opts.max_iters):
            g = y1 - y - dt * system.fast_drift(0.0, y1, p, z) - system.fast_noise * dw
            res = abs(g)
            if res < opts.tol:
                return np.array([y1])
            hy = 1e-6 * (1.0 + abs(y1))
            df = (system.fast_drift(0.0, y1 + hy, p, z)
                  - system.fast_drift(0.0, y1, p, z)) / hy
            slope = 1.0 - dt * df
            if slope == 0.0:
                raise NewtonError("singular Newton matrix in implicit step", residual=res)
            y1 -= g / slope
        raise NewtonError(
            f"implicit step did not reach tol={opts.tol} within "
            f"{opts.max_iters} iterations (residual {res:.3g})",
            residual=res,
        )
    raise ValueError(f"unsupported dims {system.dims}")


def _simulate_generic(system: SlowFastSystem, s0: np.ndarray, path: NoisePath,
                      implicit: bool, p: SystemParams, lo: float, hi: float,
                      driving: DrivingState | None, opts: NewtonOptions) -> Trajectory:
    n = path.n_steps
    dt = path.dt
    states = np.empty((n + 1, s0.shape[0]))
    states[0] = s0
    drv = None
    drv_state = driving
    if driving is not None:
        drv = np.empty((n + 1, 3))
        drv[0] = (driving.z, driving.J, driving.I)
    kept = 1
    divergent = False
    sys_eff = system if p is system.params else _with_params(system, p)
    s = s0
    for k in range(n):
        w = float(path.increments[k])
        z = drv_state.z if drv_state is not None else 0.0
        try:
            if implicit:
                s = implicit_em_step(s, sys_eff, w, dt, z=z, newton=opts)
            else:
                s = em_step(s, sys_eff, w, dt, z=z)
        except NewtonError as err:
            raise NewtonError(f"{err} at step {k} (t={path.t_start + k * dt:g})",
                              step=k, residual=err.residual) from None
        if drv_state is not None:
            drv_state = step_driving(drv_state, w, dt, p.sigma)
        if not np.all(np.isfinite(s)) or s[0] < lo or s[0] > hi:
            divergent = True
            break
        states[kept] = s
        if drv is not None:
            drv[kept] = (drv_state.z, drv_state.J, drv_state.I)
        kept += 1
    return Trajectory(
        t0=path.t_start,
        dt=dt,
        states=states[:kept],
        driving=None if drv is None else drv[:kept],
        divergent=divergent,
    )


def _with_params(system: SlowFastSystem, p: SystemParams) -> SlowFastSystem:
    import dataclasses

    return dataclasses.replace(system, params=p,
                               fast_noise=p.sigma if system.kernel == "example" else system.fast_noise)


def simulate(system: SlowFastSystem, x0, path: NoisePath, scheme: str = "explicit",
             params: SystemParams | None = None, window: tuple[float, float] = DEFAULT_WINDOW,
             driving: DrivingState | None = None,
             newton: NewtonOptions | None = None) -> Trajectory:
    """Integrate a system along a noise path.

    The (z, J, I) driving recurrence is co-evolved and recorded whenever an
    initial DrivingState is supplied; systems that read z as an input
    require one.  Integration stops at the first non-finite sample or when
    the first state component leaves ``window``, and the trajectory is then
    flagged divergent.
    """
    if scheme not in ("explicit", "implicit"):
        raise ValueError(f"scheme must be 'explicit' or 'implicit', got {scheme!r}")
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"window must satisfy lo < hi, got {window}")
    if system.uses_driving and driving is None:
        raise ValueError("this system reads the driving value z; pass an initial DrivingState")
    p = system.params if params is None else params
    opts = newton or NewtonOptions()
    s0 = _split_state(x0, system)
    implicit = scheme == "implicit"

    if system.kernel in ("example", "transformed"):
        j0 = driving.J if driving is not None else 0.0
        i0 = driving.I if driving is not None else 0.0
        runner = (_kernels.simulate_example if system.kernel == "example"
                  else _kernels.simulate_transformed)
        states, drv, status, fail_step, residual = runner(
            float(s0[0]), float(s0[1]), path.increments, p.eps, p.sigma, p.a,
            path.dt, implicit, opts.tol, opts.max_iters, lo, hi, float(j0), float(i0))
        if status == _kernels.STATUS_NEWTON_FAIL:
            raise NewtonError(
                f"implicit step did not reach tol={opts.tol} within {opts.max_iters} "
                f"iterations at step {fail_step} (t={path.t_start + fail_step * path.dt:g}, "
                f"residual {residual:.3g})",
                step=fail_step, residual=residual)
        return Trajectory(
            t0=path.t_start,
            dt=path.dt,
            states=states,
            driving=drv if driving is not None else None,
            divergent=status == _kernels.STATUS_DIVERGED,
        )
    return _simulate_generic(system, s0, path, implicit, p, lo, hi, driving, opts)
