"""Simulated IMU: specific force and angular rate with bias random walks.

The accelerometer reports the non-gravitational (specific) force only; a
vehicle in pure free fall reads zero. The stochastic force disturbance that
drove the dynamics step must be passed in unchanged — the measurement and the
dynamics share one draw per step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noise import NoiseSpec, sample_white_noise
from .quat import quat_to_rotmat
from .vehicle import VehicleState


@dataclass(frozen=True)
class ImuParams:
    rot_body_to_imu: np.ndarray = field(default_factory=lambda: np.eye(3))
    accel_noise_cov: np.ndarray = field(default_factory=lambda: np.eye(3) * 0.005**2)
    gyro_noise_cov: np.ndarray = field(default_factory=lambda: np.eye(3) * 0.001**2)
    accel_bias_density: NoiseSpec = field(default_factory=lambda: NoiseSpec.isotropic(1e-4**2))
    gyro_bias_density: NoiseSpec = field(default_factory=lambda: NoiseSpec.isotropic(1e-5**2))
    accel_bias_init_std: float = 0.02   # m/s², per axis at episode start
    gyro_bias_init_std: float = 0.002   # rad/s
    publish_rate: float = 240.0

    def __post_init__(self):
        r = np.array(self.rot_body_to_imu, dtype=float)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ValueError("rot_body_to_imu must be orthogonal")
        object.__setattr__(self, "rot_body_to_imu", r)
        for name in ("accel_noise_cov", "gyro_noise_cov"):
            cov = np.array(getattr(self, name), dtype=float)
            if not np.allclose(cov, cov.T):
                raise ValueError(f"{name} must be symmetric")
            eigval, eigvec = np.linalg.eigh(cov)
            if eigval.min() < -1e-12:
                raise ValueError(f"{name} must be positive-semidefinite")
            factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
            object.__setattr__(self, name, cov)
            object.__setattr__(self, "_factor_" + name.split("_")[0], factor)
        if 960.0 % self.publish_rate != 0.0:
            raise ValueError("publish_rate must divide the 960 Hz physics rate")

    def noise_std(self):
        """Per-sample measurement noise factors (matrix square roots)."""
        return self._factor_accel, self._factor_gyro


@dataclass
class ImuState:
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def with_random_initial_bias(cls, params: ImuParams, rng_accel, rng_gyro) -> "ImuState":
        """Draw per-episode initial biases ~ N(0, σ_b0² I)."""
        return cls(
            accel_bias=rng_accel.standard_normal(3) * params.accel_bias_init_std,
            gyro_bias=rng_gyro.standard_normal(3) * params.gyro_bias_init_std,
        )


def measure_imu(
    state: VehicleState,
    thrust_body,
    drag_world,
    noise_force_world,
    imu: ImuState,
    params: ImuParams,
    mass: float,
    rng_accel=None,
    rng_gyro=None,
):
    """One (accel, rate) measurement pair for the current step.

    Gravity never appears: the accelerometer senses thrust, drag and the
    stochastic force disturbance, all rotated into the IMU frame. Passing no
    generators yields the noise-free measurement (bias still applies).
    """
    rot_wb = quat_to_rotmat(state.attitude).T
    specific = (
        np.asarray(thrust_body, float)
        + rot_wb @ np.asarray(drag_world, float)
        + rot_wb @ np.asarray(noise_force_world, float)
    ) / mass
    accel = params.rot_body_to_imu @ specific + imu.accel_bias
    rate = params.rot_body_to_imu @ state.body_rate + imu.gyro_bias
    if rng_accel is not None:
        chol_a, _ = params.noise_std()
        accel = accel + chol_a @ rng_accel.standard_normal(3)
    if rng_gyro is not None:
        _, chol_g = params.noise_std()
        rate = rate + chol_g @ rng_gyro.standard_normal(3)
    return accel, rate


def propagate_bias(imu: ImuState, dt: float, params: ImuParams, rng_accel, rng_gyro) -> ImuState:
    """Brownian bias update: increment ~ N(0, W·dt) per interval."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    da = sample_white_noise(params.accel_bias_density, dt, rng_accel) * dt
    dg = sample_white_noise(params.gyro_bias_density, dt, rng_gyro) * dt
    return ImuState(accel_bias=imu.accel_bias + da, gyro_bias=imu.gyro_bias + dg)
