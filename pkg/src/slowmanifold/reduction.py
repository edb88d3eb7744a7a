"""Scalar reduced model induced by the first-order slow manifold.

Substituting y = h1(x) into the slow equation closes it:

    dx = -eps (a x + h1(x; z, I) / (1 + x^2)) dt,

with the driving pair (z, I) advanced alongside by its own recurrence.
``lift`` maps reduced states back to the full space through the manifold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import NewtonError, NewtonOptions, SystemParams, Trajectory, DEFAULT_WINDOW
from .manifold import h_order0, h_order1
from .noise import DrivingState, NoisePath

__all__ = [
    "ReducedState",
    "reduced_drift",
    "simulate_reduced",
    "lift",
]


@dataclass(frozen=True)
class ReducedState:
    """Reduced slow state plus the driving triple it is conditioned on."""

    x: float
    driving: DrivingState


def reduced_drift(x: float, driving: DrivingState, params: SystemParams) -> float:
    """Drift of the reduced slow equation at one instant."""
    h1 = h_order1(x, driving, params)
    return -params.eps * (params.a * x + h1 / (1.0 + x * x))


def simulate_reduced(x0: ReducedState, path: NoisePath, params: SystemParams,
                     scheme: str = "explicit",
                     window: tuple[float, float] = DEFAULT_WINDOW,
                     newton: NewtonOptions | None = None) -> Trajectory:
    """Integrate the reduced equation along a noise path.

    The noise path feeds the driving recurrence only; the slow state is
    noise-free given (z, I).  Returns a one-column trajectory carrying the
    aligned (z, J, I) samples.
    """
    if scheme not in ("explicit", "implicit"):
        raise ValueError(f"scheme must be 'explicit' or 'implicit', got {scheme!r}")
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"window must satisfy lo < hi, got {window}")
    opts = newton or NewtonOptions()
    xs, drv, status, fail_step, residual = _kernels.simulate_reduced(
        float(x0.x), path.increments, params.eps, params.sigma, params.a,
        path.dt, scheme == "implicit", opts.tol, opts.max_iters, lo, hi,
        float(x0.driving.J), float(x0.driving.I))
    if status == _kernels.STATUS_NEWTON_FAIL:
        raise NewtonError(
            f"implicit reduced step did not reach tol={opts.tol} within "
            f"{opts.max_iters} iterations at step {fail_step} "
            f"(t={path.t_start + fail_step * path.dt:g}, residual {residual:.3g})",
            step=fail_step, residual=residual)
    return Trajectory(
        t0=path.t_start,
        dt=path.dt,
        states=xs[:, None],
        driving=drv,
        divergent=status == _kernels.STATUS_DIVERGED,
    )


def lift(x: float, driving: DrivingState, params: SystemParams, order: int = 1) -> np.ndarray:
    """Lift a reduced state to the full space via the manifold expansion.

    Returns the full-space point (x, h_order(x)).
    """
    if order == 0:
        y = h_order0(x, driving.z)
    elif order == 1:
        y = h_order1(x, driving, params)
    else:
        raise ValueError(f"order must be 0 or 1, got {order}")
    return np.array([float(x), y])
