"""Fixed-step explicit integrators.

The derivative function must be deterministic over a step: stochastic forcing
is sampled once before the step and held constant across RK4 stages.
"""
from __future__ import annotations

import math

import numpy as np

EULER = "euler"
RK4 = "rk4"

METHODS = (EULER, RK4)


class IntegrationError(RuntimeError):
    pass


def integrate_step(deriv_fn, state: np.ndarray, dt: float, method: str = RK4) -> np.ndarray:
    """Advance `state` by one step of `dt` using explicit Euler or classical RK4.

    `deriv_fn` must return a fresh array on every call; the RK4 combination
    accumulates in place on the returned stage arrays.
    """
    if method == EULER:
        out = state + dt * deriv_fn(state)
    elif method == RK4:
        k1 = deriv_fn(state)
        stage = state + (0.5 * dt) * k1
        k2 = deriv_fn(stage)
        np.multiply(k2, 0.5 * dt, out=stage)
        stage += state
        k3 = deriv_fn(stage)
        np.multiply(k3, dt, out=stage)
        stage += state
        k4 = deriv_fn(stage)
        # classical combination, accumulated in place on the fresh k arrays
        k2 += k3
        k2 *= 2.0
        k1 += k4
        k1 += k2
        k1 *= dt / 6.0
        k1 += state
        out = k1
    else:
        raise ValueError(f"unknown integration method {method!r}")
    if not math.isfinite(float(out.sum())):
        raise IntegrationError("non-finite derivative encountered during step")
    return out
