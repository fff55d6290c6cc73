"""Integrator order study on the test equation dx/dt = -x.

Prints a log-log error table and fitted convergence slopes for explicit Euler
and RK4 at the simulator's step sizes. Run: python scripts/convergence_study.py
"""
import math

import numpy as np

from raceforge.integrate import EULER, RK4, integrate_step


def final_error(method: str, dt: float, horizon: float = 1.0) -> float:
    steps = round(horizon / dt)
    x = np.array([1.0])
    for _ in range(steps):
        x = integrate_step(lambda s: -s, x, dt, method)
    return abs(x[0] - math.exp(-horizon))


def main():
    dts = [1 / 240, 1 / 480, 1 / 960]
    print(f"{'dt':>12} {'euler':>14} {'rk4':>14}")
    errs = {EULER: [], RK4: []}
    for dt in dts:
        for m in (EULER, RK4):
            errs[m].append(final_error(m, dt))
        print(f"{dt:12.6f} {errs[EULER][-1]:14.3e} {errs[RK4][-1]:14.3e}")
    for m in (EULER, RK4):
        slope = np.polyfit(np.log(dts), np.log(errs[m]), 1)[0]
        print(f"{m} slope: {slope:.3f}")


if __name__ == "__main__":
    main()
