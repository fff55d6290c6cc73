"""Onboard acro/rate-mode controller.

Pipeline per physics step: Butterworth-style second-order low-pass on the
gyro measurement, PID from filtered rate to commanded angular acceleration,
then inversion of the constant thrust/moment allocation matrix into rotor
speed commands. Clients command body rates and collective thrust only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .vehicle import VehicleParams


@dataclass(frozen=True)
class RateCommand:
    body_rate_cmd: np.ndarray = field(default_factory=lambda: np.zeros(3))
    collective_thrust_cmd: float = 0.0

    def __post_init__(self):
        rates = np.array(self.body_rate_cmd, dtype=float)
        if rates.shape != (3,) or not np.isfinite(rates).all():
            raise ValueError("body rate command must be a finite 3-vector")
        if not math.isfinite(self.collective_thrust_cmd) or self.collective_thrust_cmd < 0:
            raise ValueError("collective thrust must be finite and >= 0")
        object.__setattr__(self, "body_rate_cmd", rates)


@dataclass
class LpfState:
    """Second-order low-pass filter state on the measured body rate."""

    omega_filt: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_filt_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stiffness: float = 1600.0   # bandwidth ~ sqrt(stiffness) rad/s
    damping: float = 80.0       # 2*sqrt(stiffness) = critical

    def __post_init__(self):
        if self.stiffness <= 0 or self.damping <= 0:
            raise ValueError("filter stiffness and damping must be positive")


@dataclass
class PidState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kp: np.ndarray = field(default_factory=lambda: np.diag([40.0, 40.0, 40.0]))
    ki: np.ndarray = field(default_factory=lambda: np.diag([10.0, 10.0, 10.0]))
    kd: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 1.0]))
    integral_limit: float = 1.0

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            gain = np.array(getattr(self, name), dtype=float)
            if not np.allclose(gain, np.diag(np.diag(gain))) or np.diag(gain).min() < 0:
                raise ValueError(f"{name} must be diagonal with non-negative entries")
            setattr(self, name, gain)
        # diagonal fast path used by the per-step controller update
        self._kp_diag = np.diag(self.kp).copy()
        self._ki_diag = np.diag(self.ki).copy()
        self._kd_diag = np.diag(self.kd).copy()


_LPF_MAPS: dict = {}


def _lpf_transition(p: float, q: float, dt: float, method: str):
    """One-step transition of the linear filter under the physics integrator.

    The filter ODE is linear and decoupled per axis, so a fixed-step Euler or
    RK4 update is exactly a constant linear map s' = M s + N u; M and N are
    the integrator's Taylor polynomials in dt·A, cached per configuration.
    """
    key = (p, q, dt, method)
    cached = _LPF_MAPS.get(key)
    if cached is not None:
        return cached
    a = np.array([[0.0, 1.0], [-p, -q]])
    b = np.array([0.0, p])
    eye = np.eye(2)
    if method == "euler":
        m = eye + dt * a
        n = dt * b
    elif method == "rk4":
        terms = [eye, dt * a, (dt * a) @ (dt * a) / 2.0]
        terms.append(terms[2] @ (dt * a) / 3.0)
        terms.append(terms[3] @ (dt * a) / 4.0)
        m = terms[0] + terms[1] + terms[2] + terms[3] + terms[4]
        n = (dt * eye + terms[1] * dt / 2.0 + terms[2] * dt / 3.0 + terms[3] * dt / 4.0) @ b
    else:
        raise ValueError(f"unknown integration method {method!r}")
    entry = (m[0, 0], m[0, 1], m[1, 0], m[1, 1], n[0], n[1])
    _LPF_MAPS[key] = entry
    return entry


def lpf_step(lpf: LpfState, omega_imu, dt: float, method: str = "rk4") -> LpfState:
    """Advance the filter one step with the gyro sample held constant.

    Applies the same fixed-step scheme as the physics (exactly, via the
    cached linear one-step map) so filter phase lag is consistent across
    integration methods.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    m00, m01, m10, m11, n0, n1 = _lpf_transition(lpf.stiffness, lpf.damping, dt, method)
    f0, f1, f2 = lpf.omega_filt
    r0, r1, r2 = lpf.omega_filt_rate
    u0, u1, u2 = omega_imu
    filt = np.array([m00 * f0 + m01 * r0 + n0 * u0,
                     m00 * f1 + m01 * r1 + n0 * u1,
                     m00 * f2 + m01 * r2 + n0 * u2])
    rate = np.array([m10 * f0 + m11 * r0 + n1 * u0,
                     m10 * f1 + m11 * r1 + n1 * u1,
                     m10 * f2 + m11 * r2 + n1 * u2])
    return LpfState(
        omega_filt=filt, omega_filt_rate=rate, stiffness=lpf.stiffness, damping=lpf.damping
    )


def pid_angular_accel(cmd: RateCommand, lpf: LpfState, pid: PidState, dt: float):
    """Commanded angular acceleration; returns (accel, updated PidState).

    Derivative action acts on the filtered measurement, not on the command,
    so command steps do not kick the output. The integral is accumulated in
    place (clamped per axis) and the same PidState is handed back.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    error = cmd.body_rate_cmd - lpf.omega_filt
    lim = pid.integral_limit
    pid.integral = np.minimum(np.maximum(pid.integral + error * dt, -lim), lim)
    accel = (
        pid._kp_diag * error + pid._ki_diag * pid.integral
        - pid._kd_diag * lpf.omega_filt_rate
    )
    return accel, pid


def allocation_matrix(params: VehicleParams) -> np.ndarray:
    """Map per-motor w|w| to (collective body-z thrust, body moment).

    Row 0 is thrust, rows 1..3 the moment. Must be full rank for a quad;
    degenerate geometries are a configuration error caught at startup.
    """
    if params.num_motors != 4:
        raise ValueError("control allocation requires exactly 4 motors")
    a = np.zeros((4, 4))
    a[0, :] = params.k_thrust * params.thrust_axes[:, 2]
    a[1:4, :] = (
        params.torque_sign * params.k_torque * params.thrust_axes.T
        + params.k_thrust * params.moment_arms.T
    )
    return a


class AllocationError(ValueError):
    pass


def allocate_motors(angular_accel_cmd, thrust_cmd: float, params: VehicleParams, alloc_inv=None):
    """Rotor speed commands realizing (thrust_cmd, inertia @ angular_accel_cmd).

    Negative w|w| solutions saturate at zero (props cannot reverse); with no
    saturation active the forward model reproduces the targets exactly.
    """
    if alloc_inv is None:
        a = allocation_matrix(params)
        if np.linalg.matrix_rank(a) < 4:
            raise AllocationError("allocation matrix is rank-deficient")
        alloc_inv = np.linalg.inv(a)
    target = np.empty(4)
    target[0] = thrust_cmd
    target[1:4] = params.inertia @ np.asarray(angular_accel_cmd, dtype=float)
    w_sq = alloc_inv @ target
    np.maximum(w_sq, 0.0, out=w_sq)
    return np.sqrt(w_sq)


class RateController:
    """Stateful wrapper stepping LPF + PID + allocation at the physics rate.

    The gyro sample is zero-order held between IMU updates. `model_params`
    lets a config inject deliberate parameter error into the allocation to
    mimic imperfect real-world tracking; it defaults to the true params.
    """

    def __init__(
        self,
        params: VehicleParams,
        lpf: LpfState | None = None,
        pid: PidState | None = None,
        model_params: VehicleParams | None = None,
    ):
        self.params = params
        self.model = model_params or params
        self.lpf = lpf or LpfState()
        self.pid = pid or PidState()
        a = allocation_matrix(self.model)
        if np.linalg.matrix_rank(a) < 4:
            raise AllocationError("allocation matrix is rank-deficient")
        self.alloc_inv = np.linalg.inv(a)
        self.command = RateCommand()
        self.latest_gyro = np.zeros(3)
        # flat copies for the per-step fast path
        self._alloc_rows = [tuple(row) for row in self.alloc_inv.tolist()]
        self._inertia_rows = [tuple(row) for row in self.model.inertia.tolist()]
        self._omega_max = [float(w) for w in self.params.omega_max]

    def set_command(self, cmd: RateCommand):
        self.command = cmd

    def set_gyro(self, rate):
        self.latest_gyro = np.asarray(rate, dtype=float)

    def step(self, dt: float, method: str = "rk4") -> np.ndarray:
        """One controller update; returns per-motor speed commands (rad/s).

        Scalar re-statement of allocate_motors plus the omega_max clamp; the
        allocation round-trip tests pin this against the matrix form.
        """
        self.lpf = lpf_step(self.lpf, self.latest_gyro, dt, method)
        accel, self.pid = pid_angular_accel(self.command, self.lpf, self.pid, dt)
        a0, a1, a2 = accel
        (j00, j01, j02), (j10, j11, j12), (j20, j21, j22) = self._inertia_rows
        t0 = self.command.collective_thrust_cmd
        t1 = j00 * a0 + j01 * a1 + j02 * a2
        t2 = j10 * a0 + j11 * a1 + j12 * a2
        t3 = j20 * a0 + j21 * a1 + j22 * a2
        cmds = np.empty(4)
        for i, (r0, r1, r2, r3) in enumerate(self._alloc_rows):
            w_sq = r0 * t0 + r1 * t1 + r2 * t2 + r3 * t3
            if w_sq <= 0.0:
                cmds[i] = 0.0
            else:
                w = math.sqrt(w_sq)
                w_max = self._omega_max[i]
                cmds[i] = w if w < w_max else w_max
        return cmds
