import math

import numpy as np
import pytest

from raceforge.imu import ImuParams, ImuState, measure_imu, propagate_bias
from raceforge.noise import NoiseSpec
from raceforge.quat import quat_from_axis_angle
from raceforge.rng import make_rng
from raceforge.vehicle import VehicleState

ZERO3 = np.zeros(3)


def quiet_params(**kwargs):
    defaults = dict(
        accel_noise_cov=np.zeros((3, 3)),
        gyro_noise_cov=np.zeros((3, 3)),
        accel_bias_density=NoiseSpec.isotropic(0.0),
        gyro_bias_density=NoiseSpec.isotropic(0.0),
        accel_bias_init_std=0.0,
        gyro_bias_init_std=0.0,
    )
    defaults.update(kwargs)
    return ImuParams(**defaults)


def test_free_fall_reads_zero_specific_force():
    state = VehicleState.at_rest()
    state.velocity[:] = (0, 0, -20.0)
    accel, rate = measure_imu(state, ZERO3, ZERO3, ZERO3, ImuState(), quiet_params(), 1.0)
    assert np.all(accel == 0)
    assert np.all(rate == 0)


def test_level_hover_reads_g_up():
    state = VehicleState.at_rest()
    accel, _ = measure_imu(
        state, np.array([0, 0, 9.81]), ZERO3, ZERO3, ImuState(), quiet_params(), 1.0
    )
    assert np.allclose(accel, [0, 0, 9.81])


def test_bias_shifts_output_additively():
    state = VehicleState.at_rest()
    imu = ImuState(accel_bias=np.array([0.1, 0.0, 0.0]))
    thrust = np.array([0.3, -0.2, 5.0])
    base, _ = measure_imu(state, thrust, ZERO3, ZERO3, ImuState(), quiet_params(), 1.0)
    biased, _ = measure_imu(state, thrust, ZERO3, ZERO3, imu, quiet_params(), 1.0)
    assert np.allclose(biased - base, [0.1, 0.0, 0.0])


def test_drag_and_disturbance_rotate_into_body_frame():
    # attitude yawed 90°: world x becomes body -y
    state = VehicleState.at_rest(attitude=quat_from_axis_angle([0, 0, 1], math.pi / 2))
    drag_world = np.array([1.0, 0.0, 0.0])
    accel, _ = measure_imu(state, ZERO3, drag_world, ZERO3, ImuState(), quiet_params(), 2.0)
    assert np.allclose(accel, [0.0, -0.5, 0.0], atol=1e-12)


def test_mounting_rotation_rotates_outputs_exactly():
    rot = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    state = VehicleState.at_rest()
    state.body_rate[:] = (0.1, 0.2, 0.3)
    thrust = np.array([1.0, 2.0, 3.0])
    plain_a, plain_w = measure_imu(state, thrust, ZERO3, ZERO3, ImuState(), quiet_params(), 1.0)
    rot_a, rot_w = measure_imu(
        state, thrust, ZERO3, ZERO3, ImuState(), quiet_params(rot_body_to_imu=rot), 1.0
    )
    assert np.allclose(rot_a, rot @ plain_a)
    assert np.allclose(rot_w, rot @ plain_w)


def test_zero_density_keeps_bias_fixed():
    imu = ImuState(accel_bias=np.array([1.0, 2.0, 3.0]))
    out = propagate_bias(imu, 0.1, quiet_params(), make_rng(0, "accel-bias"), make_rng(0, "gyro-bias"))
    assert np.array_equal(out.accel_bias, imu.accel_bias)


def test_bias_path_deterministic_under_fixed_seed():
    params = quiet_params(accel_bias_density=NoiseSpec.isotropic(1e-6))

    def walk():
        ra, rg = make_rng(5, "accel-bias"), make_rng(5, "gyro-bias")
        imu = ImuState()
        path = []
        for _ in range(100):
            imu = propagate_bias(imu, 1.0 / 240.0, params, ra, rg)
            path.append(imu.accel_bias)
        return np.stack(path)

    assert np.array_equal(walk(), walk())


def test_brownian_bias_variance_matches_w_times_t():
    w = 1e-6
    params = quiet_params(accel_bias_density=NoiseSpec.isotropic(w))
    t_final, dt = 100.0, 0.5
    steps = round(t_final / dt)
    runs = 1000
    finals = np.empty((runs, 3))
    for i in range(runs):
        ra, rg = make_rng(9000 + i, "accel-bias"), make_rng(9000 + i, "gyro-bias")
        imu = ImuState()
        for _ in range(steps):
            imu = propagate_bias(imu, dt, params, ra, rg)
        finals[i] = imu.accel_bias
    measured = finals.var(axis=0, ddof=1).mean()
    assert abs(measured - w * t_final) < 0.1 * w * t_final


def test_static_run_white_floor_and_drift_growth():
    # Allan-style split: per-sample variance ≈ V_a; long-horizon drift ≈ W_a·t
    va = 0.005**2
    wa = 1e-4**2
    params = quiet_params(
        accel_noise_cov=np.eye(3) * va,
        accel_bias_density=NoiseSpec.isotropic(wa),
    )
    dt = 1.0 / 240.0
    state = VehicleState.at_rest()
    rng_noise = make_rng(31, "accel-noise")
    samples = []
    imu = ImuState()
    ra, rg = make_rng(31, "accel-bias"), make_rng(31, "gyro-bias")
    for _ in range(100_000):
        imu = propagate_bias(imu, dt, params, ra, rg)
        accel, _ = measure_imu(state, ZERO3, ZERO3, ZERO3, imu, params, 1.0, rng_accel=rng_noise)
        samples.append(accel[0])
    samples = np.array(samples)
    # white floor: variance of first differences = 2·V_a + (negligible walk term)
    diff_var = np.diff(samples).var() / 2.0
    assert abs(diff_var - va) < 0.1 * va
    # drift: ensemble variance of bias after t grows as W_a·t (checked above);
    # here verify the single-path drift magnitude is in a plausible band
    t_total = len(samples) * dt
    assert abs(samples[-5000:].mean()) < 6.0 * math.sqrt(wa * t_total)


def test_publish_rate_must_divide_physics_rate():
    with pytest.raises(ValueError):
        quiet_params(publish_rate=100.0)
