"""Simulation clock with dynamic wall-rate scaling.

Sim time is always step_index * dt computed from the integer step count, so a
replayed episode reproduces timestamps bit-exactly. Rate scaling slows only
the wall-clock pacing of steps; the sim-time step size never changes.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

DEFAULT_DT = 1.0 / 960.0
DEFAULT_RATE_SMOOTHING = 0.9


@dataclass
class SimClock:
    dt: float = DEFAULT_DT
    step_index: int = 0
    rate_scale: float = 1.0
    rate_min: float = 0.05
    rate_max: float = 1.0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if not (0.0 < self.rate_min <= self.rate_max):
            raise ValueError("need 0 < rate_min <= rate_max")

    @property
    def sim_time(self) -> float:
        return self.step_index * self.dt

    def advance(self, steps: int = 1):
        """In-place step increment; the physics loop is the single writer."""
        self.step_index += steps

    def advanced(self, steps: int = 1) -> "SimClock":
        return dataclasses.replace(self, step_index=self.step_index + steps)


def update_rate_scale(
    clock: SimClock,
    measured_wall_frame_time: float,
    nominal_frame_time: float,
    smoothing: float = DEFAULT_RATE_SMOOTHING,
) -> SimClock:
    """EMA-track nominal/measured frame time into rate_scale, clamped to bounds.

    Called once per published camera frame. A machine that takes twice the
    nominal frame time converges to rate_scale 0.5; hardware faster than
    real time clamps at rate_max.
    """
    if measured_wall_frame_time <= 0.0 or nominal_frame_time <= 0.0:
        raise ValueError("frame times must be positive")
    ratio = nominal_frame_time / measured_wall_frame_time
    blended = smoothing * clock.rate_scale + (1.0 - smoothing) * ratio
    scale = min(max(blended, clock.rate_min), clock.rate_max)
    return dataclasses.replace(clock, rate_scale=scale)
