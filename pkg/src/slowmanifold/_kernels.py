"""Compiled inner loops for long simulations.

Every kernel advances state and driving with a fixed operation order so
results are reproducible bit for bit across runs and thread counts (the
kernels release the GIL and use no fast-math reassociation).  The driving
pair (J, I) always advances by explicit Euler, whatever scheme the system
state uses; within a step the state update reads the driving values from
the start of the step.

Status codes returned by the simulation kernels:

* 0 - ran to the end of the path,
* 1 - stopped at the first non-finite or out-of-window sample,
* 2 - the drift-implicit Newton solve failed to converge.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_NEWTON_FAIL = 2


@njit(cache=True, nogil=True)
def evolve_driving_arrays(j0, i0, dw, dt):
    n = dw.shape[0]
    j_arr = np.empty(n + 1)
    i_arr = np.empty(n + 1)
    j_arr[0] = j0
    i_arr[0] = i0
    for k in range(n):
        j_arr[k + 1] = j_arr[k] - 2.0 * j_arr[k] * dt + dw[k]
        i_arr[k + 1] = i_arr[k] + (-2.0 * i_arr[k] - j_arr[k]) * dt
    return j_arr, i_arr


@njit(cache=True, nogil=True, inline="always")
def _example_implicit_solve(x, y, w, eps, sigma, a, dt, tol, max_iters):
    """Drift-implicit step of the example system via damped-free Newton.

    Starts from the explicit predictor; returns (x1, y1, ok, residual).
    """
    fx = -eps * (a * x + y / (1.0 + x * x))
    fy = -2.0 * y - np.sin(x)
    x1 = x + dt * fx
    y1 = y + dt * fy + sigma * w
    ok = False
    res = np.inf
    for _ in range(max_iters):
        den = 1.0 + x1 * x1
        fx1 = -eps * (a * x1 + y1 / den)
        fy1 = -2.0 * y1 - np.sin(x1)
        g1 = x1 - x - dt * fx1
        g2 = y1 - y - dt * fy1 - sigma * w
        res = max(abs(g1), abs(g2))
        if res < tol:
            ok = True
            break
        a11 = 1.0 - dt * (-eps * (a - 2.0 * x1 * y1 / (den * den)))
        a12 = -dt * (-eps / den)
        a21 = -dt * (-np.cos(x1))
        a22 = 1.0 + 2.0 * dt
        det = a11 * a22 - a12 * a21
        x1 += (-g1 * a22 + g2 * a12) / det
        y1 += (-g2 * a11 + g1 * a21) / det
    return x1, y1, ok, res


@njit(cache=True, nogil=True, inline="always")
def _transformed_implicit_solve(u, v, z, eps, a, dt, tol, max_iters):
    """Drift-implicit step of the transformed system (z held at its
    start-of-step value; no noise enters the state)."""
    fu = -eps * (a * u + (v + z) / (1.0 + u * u))
    fv = -2.0 * v - np.sin(u)
    u1 = u + dt * fu
    v1 = v + dt * fv
    ok = False
    res = np.inf
    for _ in range(max_iters):
        den = 1.0 + u1 * u1
        fu1 = -eps * (a * u1 + (v1 + z) / den)
        fv1 = -2.0 * v1 - np.sin(u1)
        g1 = u1 - u - dt * fu1
        g2 = v1 - v - dt * fv1
        res = max(abs(g1), abs(g2))
        if res < tol:
            ok = True
            break
        a11 = 1.0 - dt * (-eps * (a - 2.0 * u1 * (v1 + z) / (den * den)))
        a12 = -dt * (-eps / den)
        a21 = -dt * (-np.cos(u1))
        a22 = 1.0 + 2.0 * dt
        det = a11 * a22 - a12 * a21
        u1 += (-g1 * a22 + g2 * a12) / det
        v1 += (-g2 * a11 + g1 * a21) / det
    return u1, v1, ok, res


@njit(cache=True, nogil=True)
def simulate_example(x0, y0, dw, eps, sigma, a, dt, implicit, tol, max_iters,
                     lo, hi, j0, i0):
    """Integrate the example system along a noise path, co-evolving (J, I).

    Returns (states, driving, status, fail_step, residual); states rows are
    (x, y), driving rows are (z, J, I), truncated to the kept samples.
    """
    n = dw.shape[0]
    states = np.empty((n + 1, 2))
    driving = np.empty((n + 1, 3))
    x = x0
    y = y0
    j = j0
    i = i0
    states[0, 0] = x
    states[0, 1] = y
    driving[0, 0] = sigma * j
    driving[0, 1] = j
    driving[0, 2] = i
    kept = 1
    status = STATUS_OK
    fail_step = -1
    residual = 0.0
    for k in range(n):
        w = dw[k]
        if implicit:
            x1, y1, ok, res = _example_implicit_solve(
                x, y, w, eps, sigma, a, dt, tol, max_iters)
            if not ok:
                status = STATUS_NEWTON_FAIL
                fail_step = k
                residual = res
                break
        else:
            fx = -eps * (a * x + y / (1.0 + x * x))
            fy = -2.0 * y - np.sin(x)
            x1 = x + dt * fx
            y1 = y + dt * fy + sigma * w
        jn = j - 2.0 * j * dt + w
        i = i + (-2.0 * i - j) * dt
        j = jn
        x = x1
        y = y1
        if not (np.isfinite(x) and np.isfinite(y)) or x < lo or x > hi:
            status = STATUS_DIVERGED
            fail_step = k
            break
        states[kept, 0] = x
        states[kept, 1] = y
        driving[kept, 0] = sigma * j
        driving[kept, 1] = j
        driving[kept, 2] = i
        kept += 1
    return states[:kept], driving[:kept], status, fail_step, residual


@njit(cache=True, nogil=True)
def simulate_transformed(u0, v0, dw, eps, sigma, a, dt, implicit, tol, max_iters,
                         lo, hi, j0, i0):
    """Integrate the transformed system; the driving value z = sigma * J is
    supplied to the slow drift, no noise enters the (u, v) state."""
    n = dw.shape[0]
    states = np.empty((n + 1, 2))
    driving = np.empty((n + 1, 3))
    u = u0
    v = v0
    j = j0
    i = i0
    states[0, 0] = u
    states[0, 1] = v
    driving[0, 0] = sigma * j
    driving[0, 1] = j
    driving[0, 2] = i
    kept = 1
    status = STATUS_OK
    fail_step = -1
    residual = 0.0
    for k in range(n):
        w = dw[k]
        z = sigma * j
        if implicit:
            u1, v1, ok, res = _transformed_implicit_solve(
                u, v, z, eps, a, dt, tol, max_iters)
            if not ok:
                status = STATUS_NEWTON_FAIL
                fail_step = k
                residual = res
                break
        else:
            fu = -eps * (a * u + (v + z) / (1.0 + u * u))
            fv = -2.0 * v - np.sin(u)
            u1 = u + dt * fu
            v1 = v + dt * fv
        jn = j - 2.0 * j * dt + w
        i = i + (-2.0 * i - j) * dt
        j = jn
        u = u1
        v = v1
        if not (np.isfinite(u) and np.isfinite(v)) or u < lo or u > hi:
            status = STATUS_DIVERGED
            fail_step = k
            break
        states[kept, 0] = u
        states[kept, 1] = v
        driving[kept, 0] = sigma * j
        driving[kept, 1] = j
        driving[kept, 2] = i
        kept += 1
    return states[:kept], driving[:kept], status, fail_step, residual


@njit(cache=True, nogil=True, inline="always")
def _reduced_f(x, z, i, eps, sigma, a):
    """Reduced slow drift using the first-order manifold value."""
    den = 1.0 + x * x
    sx = np.sin(x)
    cx = np.cos(x)
    corr = -a * x * cx / 4.0 + sx * cx / (8.0 * den) + sigma * cx / (2.0 * den) * i
    h1 = z - 0.5 * sx + eps * corr
    return -eps * (a * x + h1 / den)


@njit(cache=True, nogil=True)
def simulate_reduced(x0, dw, eps, sigma, a, dt, implicit, tol, max_iters,
                     lo, hi, j0, i0):
    """Integrate the scalar reduced equation, co-evolving (J, I).

    Returns (xs, driving, status, fail_step, residual).
    """
    n = dw.shape[0]
    xs = np.empty(n + 1)
    driving = np.empty((n + 1, 3))
    x = x0
    j = j0
    i = i0
    xs[0] = x
    driving[0, 0] = sigma * j
    driving[0, 1] = j
    driving[0, 2] = i
    kept = 1
    status = STATUS_OK
    fail_step = -1
    residual = 0.0
    for k in range(n):
        w = dw[k]
        z = sigma * j
        f = _reduced_f(x, z, i, eps, sigma, a)
        x1 = x + dt * f
        if implicit:
            ok = False
            res = np.inf
            for _ in range(max_iters):
                g = x1 - x - dt * _reduced_f(x1, z, i, eps, sigma, a)
                res = abs(g)
                if res < tol:
                    ok = True
                    break
                h = 1e-6 * (1.0 + abs(x1))
                df = (_reduced_f(x1 + h, z, i, eps, sigma, a)
                      - _reduced_f(x1, z, i, eps, sigma, a)) / h
                x1 -= g / (1.0 - dt * df)
            if not ok:
                status = STATUS_NEWTON_FAIL
                fail_step = k
                residual = res
                break
        jn = j - 2.0 * j * dt + w
        i = i + (-2.0 * i - j) * dt
        j = jn
        x = x1
        if not np.isfinite(x) or x < lo or x > hi:
            status = STATUS_DIVERGED
            fail_step = k
            break
        xs[kept] = x
        driving[kept, 0] = sigma * j
        driving[kept, 1] = j
        driving[kept, 2] = i
        kept += 1
    return xs[:kept], driving[:kept], status, fail_step, residual


@njit(cache=True, nogil=True)
def detect_full(x0, y0, dw, eps, sigma, a, dt, tol, max_iters, lo, hi, thin):
    """Long drift-implicit run of the example system recording a thinned
    slow coordinate.

    Returns (xs_thinned, status, fail_step, residual).
    """
    n = dw.shape[0]
    n_keep = n // thin + 1
    xs = np.empty(n_keep)
    xs[0] = x0
    kept = 1
    status = STATUS_OK
    fail_step = -1
    residual = 0.0
    x = x0
    y = y0
    for k in range(n):
        x1, y1, ok, res = _example_implicit_solve(
            x, y, dw[k], eps, sigma, a, dt, tol, max_iters)
        if not ok:
            status = STATUS_NEWTON_FAIL
            fail_step = k
            residual = res
            break
        x = x1
        y = y1
        if not (np.isfinite(x) and np.isfinite(y)) or x < lo or x > hi:
            status = STATUS_DIVERGED
            fail_step = k
            break
        if (k + 1) % thin == 0:
            xs[kept] = x
            kept += 1
    return xs[:kept], status, fail_step, residual


@njit(cache=True, nogil=True)
def detect_reduced(x0, dw, eps, sigma, a, dt, lo, hi, thin, j0, i0):
    """Long explicit run of the reduced equation recording a thinned state.

    Returns (xs_thinned, status, fail_step).
    """
    n = dw.shape[0]
    n_keep = n // thin + 1
    xs = np.empty(n_keep)
    xs[0] = x0
    kept = 1
    status = STATUS_OK
    fail_step = -1
    x = x0
    j = j0
    i = i0
    for k in range(n):
        w = dw[k]
        z = sigma * j
        x1 = x + dt * _reduced_f(x, z, i, eps, sigma, a)
        jn = j - 2.0 * j * dt + w
        i = i + (-2.0 * i - j) * dt
        j = jn
        x = x1
        if not np.isfinite(x) or x < lo or x > hi:
            status = STATUS_DIVERGED
            fail_step = k
            break
        if (k + 1) % thin == 0:
            xs[kept] = x
            kept += 1
    return xs[:kept], status, fail_step
