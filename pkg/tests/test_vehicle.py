import math

import numpy as np
import pytest

from raceforge.noise import NoiseSpec
from raceforge.quat import quat_from_axis_angle
from raceforge.rng import make_rng
from raceforge.vehicle import (
    MotorParams,
    VehicleState,
    WorldParams,
    aero_drag,
    default_x_quad,
    motor_derivative,
    state_derivative,
    step_vehicle,
    thrust_and_moment,
)

DT = 1.0 / 960.0


def quiet_quad(**kwargs):
    defaults = dict(force_noise_density=0.0, moment_noise_density=0.0)
    defaults.update(kwargs)
    return default_x_quad(**defaults)


def rngs(seed=0):
    return make_rng(seed, "vehicle-force"), make_rng(seed, "vehicle-moment")


# -- motor model -------------------------------------------------------------

def test_motor_at_command_has_zero_derivative():
    assert motor_derivative(500.0, 500.0, MotorParams()) == 0.0


def test_motor_derivative_arithmetic():
    assert motor_derivative(0.0, 1000.0, MotorParams(tau_m=0.02)) == pytest.approx(50_000.0)


def test_motor_closed_loop_reaches_632_percent_at_tau():
    # tau chosen so that t = tau lands exactly on the step grid
    tau = 0.025
    params = quiet_quad(tau_m=tau)
    world = WorldParams()
    rf, rm = rngs()
    state = VehicleState.at_rest()
    cmd = [1000.0] * 4
    for _ in range(round(tau / DT)):
        state = step_vehicle(state, cmd, DT, "rk4", rf, rm, params, world)
    expected = 1000.0 * (1.0 - math.exp(-1.0))
    assert abs(state.motor_speeds[0] - expected) < 1e-6 * 1000.0


# -- forces and moments ------------------------------------------------------

def test_zero_speeds_zero_wrench():
    params = quiet_quad()
    force, moment = thrust_and_moment(np.zeros(4), params)
    assert np.all(force == 0) and np.all(moment == 0)


def test_hover_force_balance_on_symmetric_quad():
    params = quiet_quad()
    omega = math.sqrt(9.81 / (4 * 1.91e-6))
    assert omega == pytest.approx(1133.15, abs=0.01)
    force, moment = thrust_and_moment([omega] * 4, params)
    assert np.allclose(force, [0, 0, 9.81], atol=1e-9)
    assert np.abs(moment).max() < 1e-12


def test_alternating_spin_cancels_yaw_torque():
    params = quiet_quad()
    _, moment = thrust_and_moment([800.0] * 4, params)
    assert moment[2] == pytest.approx(0.0, abs=1e-15)


def test_doubling_speeds_quadruples_thrust():
    params = quiet_quad()
    f1, _ = thrust_and_moment([700.0] * 4, params)
    f2, _ = thrust_and_moment([1400.0] * 4, params)
    assert np.allclose(f2, 4.0 * f1)


def test_drag_zero_at_rest():
    force, moment = aero_drag(np.zeros(3), np.zeros(3), quiet_quad())
    assert np.all(force == 0) and np.all(moment == 0)


def test_drag_force_arithmetic():
    force, _ = aero_drag([10.0, 0.0, 0.0], np.zeros(3), quiet_quad(drag_force_coeff=0.1))
    assert np.allclose(force, [-10.0, 0.0, 0.0])


def test_drag_moment_arithmetic():
    params = quiet_quad(drag_moment_coeff_diag=(0.05, 0.05, 0.05))
    _, moment = aero_drag(np.zeros(3), [0.0, 0.0, 2.0], params)
    assert np.allclose(moment, [0.0, 0.0, -0.2])


# -- full state derivative ---------------------------------------------------

def test_hover_derivative_balances_gravity():
    params = quiet_quad()
    world = WorldParams()
    state = VehicleState.at_rest()
    state.motor_speeds[:] = params.hover_speed()
    dstate = state_derivative(state, state.motor_speeds, (np.zeros(3), np.zeros(3)), params, world)
    assert np.abs(dstate.velocity).max() < 1e-12  # velocity derivative
    assert np.abs(dstate.body_rate).max() < 1e-12


def test_motors_off_free_fall():
    params = quiet_quad()
    state = VehicleState.at_rest()
    dstate = state_derivative(state, np.zeros(4), (np.zeros(3), np.zeros(3)), params, WorldParams())
    assert np.allclose(dstate.velocity, [0, 0, -9.81])


def test_principal_axis_spin_has_no_gyroscopic_acceleration():
    params = quiet_quad(drag_moment_coeff_diag=(0, 0, 0))
    state = VehicleState.at_rest()
    state.body_rate[:] = (0.0, 0.0, 1.0)
    dstate = state_derivative(state, np.zeros(4), (np.zeros(3), np.zeros(3)), params, WorldParams())
    assert np.abs(dstate.body_rate).max() < 1e-15


def test_derivative_matches_finite_difference_of_ballistic_closed_form():
    params = quiet_quad(drag_force_coeff=0.0)
    world = WorldParams()
    g = -9.81
    t, h = 0.4, 1e-5

    def pos(tt):
        return np.array([0.0, 0.0, 0.5 * g * tt * tt])

    def vel(tt):
        return np.array([0.0, 0.0, g * tt])

    state = VehicleState.at_rest(position=pos(t))
    state.velocity[:] = vel(t)
    dstate = state_derivative(state, np.zeros(4), (np.zeros(3), np.zeros(3)), params, world)
    fd_vel = (pos(t + h) - pos(t - h)) / (2 * h)
    fd_acc = (vel(t + h) - vel(t - h)) / (2 * h)
    assert np.abs(dstate.position - fd_vel).max() < 1e-6
    assert np.abs(dstate.velocity - fd_acc).max() < 1e-6


def test_derivative_matches_finite_difference_of_pure_yaw_closed_form():
    params = quiet_quad(drag_moment_coeff_diag=(0, 0, 0))
    omega = 3.0
    t, h = 0.3, 1e-5

    def quat(tt):
        return quat_from_axis_angle([0, 0, 1], omega * tt)

    state = VehicleState.at_rest(attitude=quat(t))
    state.body_rate[:] = (0.0, 0.0, omega)
    dstate = state_derivative(state, np.zeros(4), (np.zeros(3), np.zeros(3)), params, WorldParams())
    fd_qdot = (quat(t + h) - quat(t - h)) / (2 * h)
    assert np.abs(dstate.attitude - fd_qdot).max() < 1e-6


def test_non_unit_attitude_rejected():
    params = quiet_quad()
    state = VehicleState.at_rest(attitude=(1.1, 0, 0, 0))
    with pytest.raises(ValueError):
        state_derivative(state, np.zeros(4), (np.zeros(3), np.zeros(3)), params, WorldParams())


# -- stepping ----------------------------------------------------------------

def test_open_loop_hover_equilibrium_drifts_under_1mm_in_10s():
    params = quiet_quad()
    world = WorldParams()
    rf, rm = rngs()
    wh = params.hover_speed()
    state = VehicleState.at_rest(position=(0, 0, 5))
    state.motor_speeds[:] = wh
    cmd = [wh] * 4
    for _ in range(9600):
        state = step_vehicle(state, cmd, DT, "rk4", rf, rm, params, world)
    assert abs(state.position[2] - 5.0) < 1e-3


def test_one_second_free_fall_matches_half_g_t_squared():
    params = quiet_quad(drag_force_coeff=0.0)
    rf, rm = rngs()
    state = VehicleState.at_rest(position=(0, 0, 100))
    for _ in range(960):
        state = step_vehicle(state, np.zeros(4), DT, "rk4", rf, rm, params, WorldParams())
    assert abs(state.position[2] - 100.0 + 4.905) < 1e-6


def test_same_seed_gives_bit_identical_trajectories():
    params = default_x_quad()  # noise on
    world = WorldParams()

    def run():
        rf, rm = rngs(77)
        state = VehicleState.at_rest(position=(0, 0, 5))
        state.motor_speeds[:] = params.hover_speed()
        cmd = [params.hover_speed()] * 4
        history = []
        for _ in range(480):
            state = step_vehicle(state, cmd, DT, "rk4", rf, rm, params, world)
            history.append(state.as_vector())
        return np.stack(history)

    assert np.array_equal(run(), run())


def test_angular_momentum_conserved_for_principal_spin():
    params = quiet_quad(drag_moment_coeff_diag=(0, 0, 0))
    rf, rm = rngs()
    state = VehicleState.at_rest()
    state.body_rate[:] = (0.0, 0.0, 4.0)
    jz = params.inertia[2, 2]
    h_prev = jz * state.body_rate[2]
    for _ in range(960):
        state = step_vehicle(state, np.zeros(4), DT, "rk4", rf, rm, params, WorldParams())
        h = jz * state.body_rate[2]
        assert abs(h - h_prev) < 1e-9
        h_prev = h


def test_motor_speeds_clamped_to_range():
    params = quiet_quad()
    rf, rm = rngs()
    state = VehicleState.at_rest()
    state.motor_speeds[:] = 2100.0
    for _ in range(200):
        state = step_vehicle(state, [1e6] * 4, DT, "rk4", rf, rm, params, WorldParams())
    assert np.all(state.motor_speeds <= params.omega_max)


def test_hover_velocity_variance_grows_linearly_with_time():
    # ensemble of noisy hovers: Var(v_axis) = (W_f/m²)·t
    density = 2.5e-3
    params = default_x_quad(
        force_noise_density=density, moment_noise_density=0.0, drag_force_coeff=0.0
    )
    world = WorldParams()
    wh = params.hover_speed()
    cmd = [wh] * 4
    t_final = 0.25
    steps = round(t_final / DT)
    runs = 500
    finals = np.empty((runs, 3))
    for i in range(runs):
        rf, rm = rngs(1000 + i)
        state = VehicleState.at_rest(position=(0, 0, 50))
        state.motor_speeds[:] = wh
        for _ in range(steps):
            state = step_vehicle(state, cmd, DT, "rk4", rf, rm, params, world)
        finals[i] = state.velocity
    measured = finals.var(axis=0, ddof=1).mean()  # axes are iid, pool them
    expected = density * t_final / params.mass**2
    assert abs(measured - expected) < 0.05 * expected


def test_vehicle_params_validation():
    with pytest.raises(ValueError):
        default_x_quad(mass=-1.0)
    with pytest.raises(ValueError):
        MotorParams(tau_m=0.0)
    with pytest.raises(ValueError):
        MotorParams(rot_motor_to_body=np.eye(3) * 2.0)
    with pytest.raises(ValueError):
        WorldParams(gravity=(0, 0, 0))
