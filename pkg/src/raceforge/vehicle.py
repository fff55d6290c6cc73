"""Multicopter rigid-body dynamics stepped at a fixed physics rate.

Frames: world is z-up with gravity (0, 0, -9.81); the body frame is
x-forward / y-left / z-up. Motor frames may be rotated arbitrarily relative
to the body, but default to aligned (thrust along body z).

State layout (flat vector used by the integrator):
    [0:3]   position, world (m)
    [3:6]   velocity, world (m/s)
    [6:10]  attitude quaternion, body->world, scalar first
    [10:13] body angular rate (rad/s)
    [13:]   per-motor rotor speeds (rad/s)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .integrate import RK4, IntegrationError
from .noise import NoiseSpec, sample_white_noise
from .quat import quat_norm

GRAVITY = 9.81


@dataclass(frozen=True)
class MotorParams:
    """One rotor: first-order speed lag plus quadratic thrust/torque maps."""

    tau_m: float = 0.02            # s, speed-response time constant
    k_thrust: float = 1.91e-6      # N s²/rad², thrust = k |w| w along motor z
    k_torque: float = 2.6e-8       # N m s²/rad², reaction torque about motor z
    spin_positive: bool = True     # True: w > 0 spins +z, reaction torque -z
    rot_motor_to_body: np.ndarray = field(default_factory=lambda: np.eye(3))
    position_body: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_max: float = 2200.0      # rad/s

    def __post_init__(self):
        if self.tau_m <= 0 or self.k_thrust <= 0 or self.k_torque <= 0:
            raise ValueError("tau_m, k_thrust, k_torque must be positive")
        if not (0 < self.omega_max < math.inf):
            raise ValueError("omega_max must be positive and finite")
        r = np.array(self.rot_motor_to_body, dtype=float)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9) or np.linalg.det(r) < 0:
            raise ValueError("rot_motor_to_body must be a proper rotation")
        object.__setattr__(self, "rot_motor_to_body", r)
        object.__setattr__(self, "position_body", np.array(self.position_body, dtype=float))


@dataclass(frozen=True)
class WorldParams:
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -GRAVITY]))

    def __post_init__(self):
        g = np.array(self.gravity, dtype=float)
        if not (0.0 < np.linalg.norm(g) < 20.0):
            raise ValueError("gravity magnitude must lie in (0, 20) m/s²")
        object.__setattr__(self, "gravity", g)


class VehicleParams:
    """Mass/inertia/drag/noise parameters plus the motor set.

    Derived per-motor arrays (thrust axes, moment arms) are precomputed here
    because the derivative evaluation is the hottest code in the simulator.
    """

    def __init__(
        self,
        mass: float,
        inertia: np.ndarray,
        drag_force_coeff: float,
        drag_moment_coeff: np.ndarray,
        force_noise: NoiseSpec,
        moment_noise: NoiseSpec,
        motors: list[MotorParams],
        collider_radius: float = 0.2,
    ):
        if mass <= 0:
            raise ValueError("mass must be positive")
        if len(motors) < 1:
            raise ValueError("need at least one motor")
        inertia = np.array(inertia, dtype=float)
        eigs = np.linalg.eigvalsh((inertia + inertia.T) / 2)
        if eigs.min() <= 0:
            raise ValueError("inertia must be symmetric positive-definite")
        self.mass = float(mass)
        self.inertia = inertia
        self.inertia_inv = np.linalg.inv(inertia)
        self.drag_force_coeff = float(drag_force_coeff)
        self.drag_moment_coeff = np.array(drag_moment_coeff, dtype=float)
        self.force_noise = force_noise
        self.moment_noise = moment_noise
        self.motors = list(motors)
        self.collider_radius = float(collider_radius)

        n = len(motors)
        # thrust_axes[i] = R^b_m[:, 2]: motor z expressed in body axes
        self.thrust_axes = np.stack([m.rot_motor_to_body[:, 2] for m in motors])
        self.moment_arms = np.stack(
            [np.cross(m.position_body, m.rot_motor_to_body[:, 2]) for m in motors]
        )
        self.k_thrust = np.array([m.k_thrust for m in motors])
        self.k_torque = np.array([m.k_torque for m in motors])
        self.torque_sign = np.array([-1.0 if m.spin_positive else 1.0 for m in motors])
        self.tau_m = np.array([m.tau_m for m in motors])
        self.omega_max = np.array([m.omega_max for m in motors])
        self.num_motors = n

        # packed constants for the compiled derivative kernel:
        # [m_inv, k_fD, g(3)=0.., J(9), J^-1(9), k_muD(9), then per motor:
        #  k_fT, signed k_muT, tau, axis(3), arm(3), omega_max]
        pack = [1.0 / self.mass, self.drag_force_coeff, 0.0, 0.0, 0.0]
        pack += list(self.inertia.ravel())
        pack += list(self.inertia_inv.ravel())
        pack += list(self.drag_moment_coeff.ravel())
        for i in range(n):
            pack += [self.k_thrust[i], self.torque_sign[i] * self.k_torque[i], self.tau_m[i]]
            pack += list(self.thrust_axes[i])
            pack += list(self.moment_arms[i])
            pack += [self.omega_max[i]]
        self._pack = np.array(pack)
        self._pack_cache = {}

    def packed_with_gravity(self, world: "WorldParams") -> np.ndarray:
        entry = self._pack_cache.get(id(world))
        if entry is None or entry[0] is not world:
            pack = self._pack.copy()
            pack[2:5] = world.gravity
            entry = (world, pack)  # world ref pins the id against reuse
            self._pack_cache[id(world)] = entry
        return entry[1]

    def hover_speed(self, world: WorldParams | None = None) -> float:
        """Per-motor speed balancing gravity on a symmetric planar multicopter."""
        g = GRAVITY if world is None else float(np.linalg.norm(world.gravity))
        return math.sqrt(self.mass * g / (self.k_thrust.sum()))


@dataclass
class VehicleState:
    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    body_rate: np.ndarray
    motor_speeds: np.ndarray

    @classmethod
    def at_rest(cls, position=(0.0, 0.0, 0.0), attitude=(1.0, 0.0, 0.0, 0.0), num_motors=4):
        return cls(
            position=np.array(position, dtype=float),
            velocity=np.zeros(3),
            attitude=np.array(attitude, dtype=float),
            body_rate=np.zeros(3),
            motor_speeds=np.zeros(num_motors),
        )

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            (self.position, self.velocity, self.attitude, self.body_rate, self.motor_speeds)
        )

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "VehicleState":
        return cls(
            position=x[0:3].copy(),
            velocity=x[3:6].copy(),
            attitude=x[6:10].copy(),
            body_rate=x[10:13].copy(),
            motor_speeds=x[13:].copy(),
        )

    def copy(self) -> "VehicleState":
        return VehicleState(
            position=self.position.copy(),
            velocity=self.velocity.copy(),
            attitude=self.attitude.copy(),
            body_rate=self.body_rate.copy(),
            motor_speeds=self.motor_speeds.copy(),
        )


def motor_derivative(omega: float, omega_cmd: float, params: MotorParams) -> float:
    """First-order rotor speed lag; omega_cmd is expected pre-clamped."""
    return (omega_cmd - omega) / params.tau_m


def thrust_and_moment(motor_speeds, params: VehicleParams):
    """Total propeller force and moment in the body frame.

    Thrust is quadratic in rotor speed (k |w| w along each motor z); the
    moment combines per-rotor reaction torque (sign set by spin direction)
    and the thrust lever arm about the center of mass.
    """
    w = np.asarray(motor_speeds, dtype=float)
    thrust = params.k_thrust * w * np.abs(w)
    torque = params.torque_sign * params.k_torque * w * np.abs(w)
    force = thrust @ params.thrust_axes
    moment = torque @ params.thrust_axes + thrust @ params.moment_arms
    return force, moment


def aero_drag(velocity, body_rate, params: VehicleParams):
    """Speed-squared drag: world-frame force and body-frame moment."""
    v = np.asarray(velocity, dtype=float)
    w = np.asarray(body_rate, dtype=float)
    force = -params.drag_force_coeff * math.sqrt(v @ v) * v
    moment = -params.drag_moment_coeff @ (math.sqrt(w @ w) * w)
    return force, moment


@njit(cache=True)
def _deriv_kernel(x, cmds, noise, pack, out):
    """Flat-state time derivative; scalar math, compiled.

    `pack` is VehicleParams.packed_with_gravity (constants layout documented
    there); `noise` is the held (force, moment) draw as a flat 6-vector.
    Evaluated up to four times per step by RK4 — the hottest code in the
    simulator.
    """
    m_inv = pack[0]
    kfd = pack[1]
    gx, gy, gz = pack[2], pack[3], pack[4]
    j00, j01, j02, j10, j11, j12, j20, j21, j22 = pack[5:14]
    i00, i01, i02, i10, i11, i12, i20, i21, i22 = pack[14:23]
    d00, d01, d02, d10, d11, d12, d20, d21, d22 = pack[23:32]

    vx, vy, vz = x[3], x[4], x[5]
    qr, qi, qj, qk = x[6], x[7], x[8], x[9]
    wx, wy, wz = x[10], x[11], x[12]
    out[0] = vx
    out[1] = vy
    out[2] = vz

    n = cmds.shape[0]
    ftx = fty = ftz = 0.0
    mtx = mty = mtz = 0.0
    for idx in range(n):
        base = 32 + 10 * idx
        w = x[13 + idx]
        t = pack[base] * w * abs(w)
        rq = pack[base + 1] * w * abs(w)
        ax, ay, az = pack[base + 3], pack[base + 4], pack[base + 5]
        bx, by, bz = pack[base + 6], pack[base + 7], pack[base + 8]
        ftx += ax * t
        fty += ay * t
        ftz += az * t
        mtx += ax * rq + bx * t
        mty += ay * rq + by * t
        mtz += az * rq + bz * t
        out[13 + idx] = (cmds[idx] - w) / pack[base + 2]

    r00 = 1.0 - 2.0 * (qj * qj + qk * qk)
    r01 = 2.0 * (qi * qj - qk * qr)
    r02 = 2.0 * (qi * qk + qj * qr)
    r10 = 2.0 * (qi * qj + qk * qr)
    r11 = 1.0 - 2.0 * (qi * qi + qk * qk)
    r12 = 2.0 * (qj * qk - qi * qr)
    r20 = 2.0 * (qi * qk - qj * qr)
    r21 = 2.0 * (qj * qk + qi * qr)
    r22 = 1.0 - 2.0 * (qi * qi + qj * qj)

    speed = math.sqrt(vx * vx + vy * vy + vz * vz)
    kd = -kfd * speed
    out[3] = gx + m_inv * (r00 * ftx + r01 * fty + r02 * ftz + kd * vx + noise[0])
    out[4] = gy + m_inv * (r10 * ftx + r11 * fty + r12 * ftz + kd * vy + noise[1])
    out[5] = gz + m_inv * (r20 * ftx + r21 * fty + r22 * ftz + kd * vz + noise[2])

    out[6] = 0.5 * (-qi * wx - qj * wy - qk * wz)
    out[7] = 0.5 * (qr * wx - qk * wy + qj * wz)
    out[8] = 0.5 * (qk * wx + qr * wy - qi * wz)
    out[9] = 0.5 * (-qj * wx + qi * wy + qr * wz)

    rate = math.sqrt(wx * wx + wy * wy + wz * wz)
    ux, uy, uz = rate * wx, rate * wy, rate * wz
    jwx = j00 * wx + j01 * wy + j02 * wz
    jwy = j10 * wx + j11 * wy + j12 * wz
    jwz = j20 * wx + j21 * wy + j22 * wz
    sx = mtx - (d00 * ux + d01 * uy + d02 * uz) + noise[3] - (wy * jwz - wz * jwy)
    sy = mty - (d10 * ux + d11 * uy + d12 * uz) + noise[4] - (wz * jwx - wx * jwz)
    sz = mtz - (d20 * ux + d21 * uy + d22 * uz) + noise[5] - (wx * jwy - wy * jwx)
    out[10] = i00 * sx + i01 * sy + i02 * sz
    out[11] = i10 * sx + i11 * sy + i12 * sz
    out[12] = i20 * sx + i21 * sy + i22 * sz
    return out


def _make_derivative(motor_cmds, noise_force, noise_moment, params, world):
    """Bind the derivative kernel to one step's held commands and noise."""
    cmds = np.asarray(motor_cmds, dtype=float)
    noise = np.empty(6)
    noise[0:3] = noise_force
    noise[3:6] = noise_moment
    pack = params.packed_with_gravity(world)

    def deriv(x):
        return _deriv_kernel(x, cmds, noise, pack, np.empty_like(x))

    return deriv


@njit(cache=True)
def _rk4_step_kernel(x, cmds, noise, pack, dt):
    """One classical RK4 step of the vehicle state, fully compiled.

    Identical scheme to integrate_step(..., method="rk4") with the bound
    derivative kernel; fused here because the four stage evaluations at
    960 Hz dominate simulation cost. Equivalence is asserted by tests.
    """
    n = x.shape[0]
    k1 = _deriv_kernel(x, cmds, noise, pack, np.empty(n))
    stage = np.empty(n)
    for i in range(n):
        stage[i] = x[i] + 0.5 * dt * k1[i]
    k2 = _deriv_kernel(stage, cmds, noise, pack, np.empty(n))
    for i in range(n):
        stage[i] = x[i] + 0.5 * dt * k2[i]
    k3 = _deriv_kernel(stage, cmds, noise, pack, np.empty(n))
    for i in range(n):
        stage[i] = x[i] + dt * k3[i]
    k4 = _deriv_kernel(stage, cmds, noise, pack, np.empty(n))
    out = np.empty(n)
    sixth = dt / 6.0
    for i in range(n):
        out[i] = x[i] + sixth * ((k1[i] + k4[i]) + 2.0 * (k2[i] + k3[i]))
    _finish_step(out, pack)
    return out


@njit(cache=True)
def _euler_step_kernel(x, cmds, noise, pack, dt):
    k1 = _deriv_kernel(x, cmds, noise, pack, np.empty(x.shape[0]))
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = x[i] + dt * k1[i]
    _finish_step(out, pack)
    return out


@njit(cache=True)
def _finish_step(out, pack):
    # renormalize the attitude, clamp rotor speeds to [0, omega_max]
    qr, qi, qj, qk = out[6], out[7], out[8], out[9]
    inv_norm = 1.0 / math.sqrt(qr * qr + qi * qi + qj * qj + qk * qk)
    out[6] = qr * inv_norm
    out[7] = qi * inv_norm
    out[8] = qj * inv_norm
    out[9] = qk * inv_norm
    for idx in range(out.shape[0] - 13):
        w = out[13 + idx]
        if w < 0.0:
            out[13 + idx] = 0.0
        else:
            w_max = pack[32 + 10 * idx + 9]
            if w > w_max:
                out[13 + idx] = w_max


def state_derivative(state: VehicleState, motor_cmds, sampled_noise, params, world):
    """Full 6-DOF derivative with held stochastic force/moment.

    `sampled_noise` is the (force, moment) pair drawn once for the step.
    Returns a VehicleState whose fields are the time derivatives.
    """
    x = state.as_vector()
    if not np.isfinite(x).all():
        raise ValueError("non-finite vehicle state")
    n = quat_norm(state.attitude)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"attitude norm {n} deviates from unit beyond 1e-6")
    noise_force, noise_moment = sampled_noise
    cmds = np.minimum(np.maximum(np.asarray(motor_cmds, dtype=float), 0.0), params.omega_max)
    deriv = _make_derivative(cmds, noise_force, noise_moment, params, world)
    return VehicleState.from_vector(deriv(x))


def step_vehicle(
    state: VehicleState,
    motor_cmds,
    dt: float,
    method: str,
    rng_force,
    rng_moment,
    params: VehicleParams,
    world: WorldParams,
    step_index: int | None = None,
) -> VehicleState:
    """Advance the vehicle one physics step.

    Disturbances are sampled once and held across RK4 stages; the attitude is
    renormalized and motor speeds clamped to [0, omega_max] after the step.
    """
    noise_force = sample_white_noise(params.force_noise, dt, rng_force)
    noise_moment = sample_white_noise(params.moment_noise, dt, rng_moment)
    return step_vehicle_with_noise(
        state, motor_cmds, dt, method, noise_force, noise_moment, params, world, step_index
    )


def step_vehicle_with_noise(
    state: VehicleState,
    motor_cmds,
    dt: float,
    method: str,
    noise_force,
    noise_moment,
    params: VehicleParams,
    world: WorldParams,
    step_index: int | None = None,
) -> VehicleState:
    """step_vehicle with the stochastic terms already drawn.

    Exists so the IMU can be fed the identical disturbance sample that drove
    the dynamics step instead of re-drawing independently.
    """
    cmds = np.minimum(np.maximum(np.asarray(motor_cmds, dtype=float), 0.0), params.omega_max)

    x = state.as_vector()
    noise = np.empty(6)
    noise[0:3] = noise_force
    noise[3:6] = noise_moment
    pack = params.packed_with_gravity(world)
    if method == RK4:
        x_new = _rk4_step_kernel(x, cmds, noise, pack, dt)
    elif method == "euler":
        x_new = _euler_step_kernel(x, cmds, noise, pack, dt)
    else:
        raise ValueError(f"unknown integration method {method!r}")
    if not math.isfinite(float(x_new.sum())):
        suffix = "" if step_index is None else f" at step {step_index}"
        raise IntegrationError("non-finite derivative encountered during step" + suffix)
    return VehicleState.from_vector(x_new)


def default_x_quad(
    mass: float = 1.0,
    arm_length: float = 0.16,
    inertia_diag=(0.0049, 0.0049, 0.0069),
    k_thrust: float = 1.91e-6,
    k_torque: float = 2.6e-8,
    tau_m: float = 0.02,
    drag_force_coeff: float = 0.1,
    drag_moment_coeff_diag=(0.003, 0.003, 0.003),
    force_noise_density: float = 0.05**2,
    moment_noise_density: float = 5.0e-4**2,
    omega_max: float = 2200.0,
    collider_radius: float = 0.2,
) -> VehicleParams:
    """Symmetric X-quad: motors on the ±45° diagonals, alternating spin.

    Motors 0/1 sit on the (+x,+y)/(-x,-y) diagonal and spin positive; motors
    2/3 on (+x,-y)/(-x,+y) spin negative, so equal speeds cancel yaw torque.
    """
    d = arm_length / math.sqrt(2.0)
    layout = [
        (np.array([d, d, 0.0]), True),
        (np.array([-d, -d, 0.0]), True),
        (np.array([d, -d, 0.0]), False),
        (np.array([-d, d, 0.0]), False),
    ]
    motors = [
        MotorParams(
            tau_m=tau_m,
            k_thrust=k_thrust,
            k_torque=k_torque,
            spin_positive=spin,
            position_body=pos,
            omega_max=omega_max,
        )
        for pos, spin in layout
    ]
    return VehicleParams(
        mass=mass,
        inertia=np.diag(inertia_diag),
        drag_force_coeff=drag_force_coeff,
        drag_moment_coeff=np.diag(drag_moment_coeff_diag),
        force_noise=NoiseSpec.isotropic(force_noise_density),
        moment_noise=NoiseSpec.isotropic(moment_noise_density),
        motors=motors,
        collider_radius=collider_radius,
    )
