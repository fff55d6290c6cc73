"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to get one printed pass line
per criterion (a failed assertion prints as the test failure instead).
"""
import json
import math
import shlex
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from raceforge.clock import SimClock
from raceforge.config import SimConfig
from raceforge.controller import RateCommand, allocate_motors
from raceforge.imu import ImuState, propagate_bias
from raceforge.integrate import EULER, RK4, integrate_step
from raceforge.noise import NoiseSpec, sample_white_noise
from raceforge.race import RaceRecord, compute_score, final_score
from raceforge.rng import make_rng
from raceforge.scene import IrBeacon, Scene, ray_cast
from raceforge.sensors import (
    CameraIntrinsics,
    project_point,
    right_camera_pose,
    sense_ir_beacons,
)
from raceforge.simulator import Simulator
from raceforge.vehicle import (
    VehicleState,
    WorldParams,
    default_x_quad,
    step_vehicle,
    thrust_and_moment,
)

from oracle_helpers import brute_force_ray, random_primitive_soup

REPO = Path(__file__).resolve().parents[1]
DT = 1.0 / 960.0

# camera facing world +x from the origin (default forward mounting)
from raceforge.sensors import RigidTransform  # noqa: E402

LOOK_X = RigidTransform(
    rotation=np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
)


def report(name):
    print(f"\nACCEPTANCE PASS: {name}")


def quiet_quad(**kwargs):
    defaults = dict(force_noise_density=0.0, moment_noise_density=0.0)
    defaults.update(kwargs)
    return default_x_quad(**defaults)


def rngs(seed=0):
    return make_rng(seed, "vehicle-force"), make_rng(seed, "vehicle-moment")


def tilt_of(attitude):
    r22 = 1.0 - 2.0 * (attitude[1] ** 2 + attitude[2] ** 2)
    return math.acos(min(1.0, max(-1.0, r22)))


# ---------------------------------------------------------------------------

def test_physics_rate_contract():
    """960 Hz stepping: dt exactly 1/960; 60 s episode = exactly 57,600 steps."""
    cfg = SimConfig()
    cfg.noise_enabled = False
    cfg.time_limit = 1e9
    sim = Simulator(cfg, scene=Scene(), start={"position": [0, 0, 5], "yaw": 0.0})
    sim.keep_rows = False
    assert sim.clock.dt == 1.0 / 960.0
    sim.apply_command(RateCommand(collective_thrust_cmd=9.81))
    steps = 0
    while sim.sim_time < 60.0:
        sim.step()
        steps += 1
    assert steps == 57_600
    assert sim.clock.step_index == 57_600
    assert sim.sim_time == 60.0
    # every increment is exactly one step on the integer grid
    assert SimClock().advanced(57_600).sim_time == 60.0
    report("physics rate: dt = 1/960 exactly, 60 s episode = 57,600 steps")


def test_motor_lag_step_response():
    """Rotor step response vs ω_c(1−e^(−t/τ)): RK4 within 1e-6, Euler within 1e-3."""
    params = quiet_quad()  # tau_m = 0.02
    world = WorldParams()
    omega_cmd = 1500.0
    t_eval = 0.1  # 5 time constants, 96 steps
    exact = omega_cmd * (1.0 - math.exp(-t_eval / 0.02))
    errors = {}
    for method in (RK4, EULER):
        rf, rm = rngs()
        state = VehicleState.at_rest(position=(0, 0, 100))
        for _ in range(round(t_eval / DT)):
            state = step_vehicle(state, [omega_cmd] * 4, DT, method, rf, rm, params, world)
        errors[method] = abs(state.motor_speeds[0] - exact) / omega_cmd
    assert errors[RK4] < 1e-6, errors
    assert errors[EULER] < 1e-3, errors
    report(
        f"motor lag: rel err rk4={errors[RK4]:.2e} (<1e-6), euler={errors[EULER]:.2e} (<1e-3)"
    )


def test_ballistics_oracle():
    """One second of drag-free free fall: Δz = −4.905 m within 1e-6 m (RK4)."""
    params = quiet_quad(drag_force_coeff=0.0)
    rf, rm = rngs()
    state = VehicleState.at_rest(position=(0, 0, 100))
    for _ in range(960):
        state = step_vehicle(state, np.zeros(4), DT, RK4, rf, rm, params, WorldParams())
    error = abs((state.position[2] - 100.0) + 4.905)
    assert error < 1e-6
    report(f"ballistics: 1 s free fall dz error {error:.2e} m (<1e-6)")


def test_convergence_orders():
    """Euler slope 1.0±0.2 and RK4 slope >= 3.8 on dx/dt = -x."""
    def terminal_error(method, dt):
        x = np.array([1.0])
        for _ in range(round(1.0 / dt)):
            x = integrate_step(lambda s: -s, x, dt, method)
        return abs(x[0] - math.exp(-1.0))

    dts = [1 / 240, 1 / 480, 1 / 960]
    slopes = {}
    for method in (EULER, RK4):
        errs = [terminal_error(method, dt) for dt in dts]
        slopes[method] = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slopes[EULER] - 1.0) <= 0.2
    assert slopes[RK4] >= 3.8
    report(f"convergence: euler slope {slopes[EULER]:.3f}, rk4 slope {slopes[RK4]:.3f}")


def test_noise_statistics():
    """Disturbance std within 1% of sqrt(W/dt); bias variance grows as W·t within 10%."""
    spec = NoiseSpec.isotropic(0.05**2)
    samples = sample_white_noise(spec, DT, make_rng(4, "vehicle-force"), size=1_000_000)
    target = math.sqrt(0.05**2 / DT)
    std_err = np.abs(samples.std(axis=0) - target).max() / target
    assert std_err < 0.01

    w = 1e-6
    from raceforge.imu import ImuParams

    params = ImuParams(
        accel_bias_density=NoiseSpec.isotropic(w),
        gyro_bias_density=NoiseSpec.isotropic(0.0),
        accel_noise_cov=np.zeros((3, 3)),
        gyro_noise_cov=np.zeros((3, 3)),
        accel_bias_init_std=0.0,
        gyro_bias_init_std=0.0,
    )
    t_final, dt_b = 100.0, 0.5
    runs = 1000
    finals = np.empty((runs, 3))
    for i in range(runs):
        ra, rg = make_rng(40_000 + i, "accel-bias"), make_rng(40_000 + i, "gyro-bias")
        imu = ImuState()
        for _ in range(round(t_final / dt_b)):
            imu = propagate_bias(imu, dt_b, params, ra, rg)
        finals[i] = imu.accel_bias
    var_err = abs(finals.var(axis=0, ddof=1).mean() - w * t_final) / (w * t_final)
    assert var_err < 0.10
    report(
        f"noise stats: sampled std within {std_err*100:.2f}% (<1%), "
        f"bias var within {var_err*100:.1f}% of W·t (<10%)"
    )


def test_allocation_roundtrip():
    """forward(allocate(cmd)) reproduces the command within 1e-9, 1e4 samples."""
    params = default_x_quad()
    rng = np.random.default_rng(2718)
    checked = 0
    worst = 0.0
    while checked < 10_000:
        accel = rng.uniform(-150.0, 150.0, 3)
        thrust = rng.uniform(4.0, 28.0)
        speeds = allocate_motors(accel, thrust, params)
        if np.any(speeds == 0.0) or np.any(speeds >= params.omega_max.min()):
            continue  # saturated: round-trip contract does not apply
        force, moment = thrust_and_moment(speeds, params)
        target = np.concatenate(([thrust], params.inertia @ accel))
        got = np.concatenate(([force[2]], moment))
        worst = max(worst, np.abs(got - target).max())
        checked += 1
    assert worst < 1e-9
    report(f"allocation round-trip: worst residual {worst:.2e} over 10^4 commands (<1e-9)")


def closed_loop_hover(seconds, noise: bool):
    cfg = SimConfig()
    cfg.noise_enabled = noise
    cfg.time_limit = 1e9
    sim = Simulator(cfg, scene=Scene(), start={"position": [0, 0, 5], "yaw": 0.0})
    sim.keep_rows = False
    sim.apply_command(
        RateCommand(body_rate_cmd=np.zeros(3), collective_thrust_cmd=cfg.vehicle.mass * 9.81)
    )
    max_tilt = 0.0
    for _ in range(round(seconds / DT)):
        sim.step()
        max_tilt = max(max_tilt, tilt_of(sim.state.attitude))
    return sim, max_tilt


def test_closed_loop_hover_noise_off():
    """Ω_c=0, T_c=mg, noise off: tilt < 1e-6 rad and |Δaltitude| < 1 cm over 10 s."""
    sim, max_tilt = closed_loop_hover(10.0, noise=False)
    dz = abs(sim.state.position[2] - 5.0)
    assert max_tilt < 1e-6
    assert dz < 0.01
    report(f"hover (noise off): max tilt {max_tilt:.2e} rad (<1e-6), dz {dz:.2e} m (<1 cm)")


def test_closed_loop_hover_noise_on():
    """Default noise: tilt stays below 10 degrees for 30 s."""
    sim, max_tilt = closed_loop_hover(30.0, noise=True)
    assert math.degrees(max_tilt) < 10.0
    report(f"hover (default noise): max tilt {math.degrees(max_tilt):.2f} deg over 30 s (<10)")


def test_camera_defaults_and_stereo():
    """Config ships fov 70 / 1024x768 / 0.32 m; focal 548.41±0.01 px; disparity identity."""
    cfg = SimConfig()
    intr = CameraIntrinsics(
        vertical_fov=cfg.camera.vertical_fov,
        width=cfg.camera.width,
        height=cfg.camera.height,
        stereo_baseline=cfg.camera.stereo_baseline,
    )
    assert (intr.vertical_fov, intr.width, intr.height) == (70.0, 1024, 768)
    assert intr.stereo_baseline == 0.32
    assert abs(intr.focal_px - 548.41) < 0.01

    right = right_camera_pose(LOOK_X, intr)
    worst = 0.0
    for depth in (1.5, 4.0, 9.0, 27.0, 80.0):
        point = np.array([depth, 0.7, -0.4])
        ul, _ = project_point(point, LOOK_X, intr)
        ur, _ = project_point(point, right, intr)
        recovered = intr.focal_px * intr.stereo_baseline / (ul - ur)
        worst = max(worst, abs(recovered - depth))
    assert worst < 1e-6
    report(
        f"camera: defaults exact, focal {intr.focal_px:.4f} px, "
        f"stereo depth identity worst {worst:.2e} m (<1e-6)"
    )


def test_ir_sensor_reprojection_and_occlusion():
    """Emitted (u,v) equals ground-truth reprojection exactly; occluders remove beacons."""
    rng = np.random.default_rng(99)
    beacons = [IrBeacon(i, rng.uniform([3, -4, -3], [30, 4, 3])) for i in range(25)]
    scene = Scene(static_beacons=beacons)
    intr = CameraIntrinsics()
    observations = sense_ir_beacons(LOOK_X, scene, intr)
    assert observations, "no beacons in view"
    by_id = {b.id: b for b in beacons}
    for obs in observations:
        truth = project_point(by_id[obs.beacon_id].position, LOOK_X, intr)
        assert (obs.u, obs.v) == truth  # exact equality, zero-noise sensor

    target = IrBeacon(500, (10.0, 0.0, 0.0))
    wall = [
        [[5.0, -2, -2], [5.0, 2, -2], [5.0, 2, 2]],
        [[5.0, -2, -2], [5.0, 2, 2], [5.0, -2, 2]],
    ]
    visible = sense_ir_beacons(LOOK_X, Scene(static_beacons=[target]), intr)
    occluded = sense_ir_beacons(LOOK_X, Scene(static_beacons=[target], triangles=wall), intr)
    assert [o.beacon_id for o in visible] == [500]
    assert occluded == []
    report("ir sensor: observations equal reprojections exactly; occlusion removes beacons")


def test_scoring_rules():
    """score = 10·gates − time; zero on collision/non-finish; top-5 mean vs sort oracle."""
    assert compute_score(RaceRecord(11, 30.0, False, True), 120.0) == 80.0
    assert compute_score(RaceRecord(11, 20.0, True, True), 120.0) == 0.0
    assert compute_score(RaceRecord(10, 120.0, False, False), 120.0) == 0.0
    rng = np.random.default_rng(5)
    for _ in range(200):
        gates = int(rng.integers(0, 12))
        elapsed = float(rng.uniform(0, 119))
        record = RaceRecord(gates, elapsed, False, True)
        assert compute_score(record, 120.0) == 10.0 * gates - elapsed
    for _ in range(200):
        scores = rng.uniform(0, 120, 25)
        oracle = float(np.mean(sorted(scores, reverse=True)[:5]))
        assert final_score(list(scores)) == pytest.approx(oracle, abs=1e-12)
    report("scoring: formula exact, zero rules enforced, top-5 mean matches sort oracle")


def test_ray_cast_brute_force_oracle():
    """Nearest hits agree with an all-primitive scan on 100 random scenes."""
    rng = np.random.default_rng(31415)
    checked = 0
    for _ in range(100):
        tris, boxes = random_primitive_soup(rng, int(rng.integers(1, 101)))
        scene = Scene(triangles=tris if tris else None, boxes=boxes if boxes else None)
        for _ in range(5):
            origin = rng.uniform(-12, 12, 3)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            expected = brute_force_ray(origin, direction, tris, boxes, 60.0)
            hit = ray_cast(origin, direction, scene, 60.0)
            if math.isinf(expected):
                assert hit is None
            else:
                assert hit is not None and abs(hit.distance - expected) < 1e-9
            checked += 1
    report(f"ray casting: {checked} rays on 100 random scenes match the brute-force oracle")


@pytest.mark.slow
def test_evaluation_determinism_and_runtime(tmp_path):
    """Two 25-course evaluations: byte-identical outputs, each under 5 minutes."""
    config = {
        "time_limit": 5.0,
        "service": {"port": 0, "recv_timeout": 30.0},
        "evaluation": {"seeds": list(range(1, 26))},
    }
    cfg_path = tmp_path / "eval_config.json"
    cfg_path.write_text(json.dumps(config))
    racer = f"{sys.executable} {REPO / 'scripts' / 'scripted_racer.py'}"

    durations = []
    for label in ("a", "b"):
        out = tmp_path / label
        t0 = time.monotonic()
        proc = subprocess.run(
            [
                sys.executable, "-m", "raceforge.cli", "evaluate",
                "--config", str(cfg_path), "--controller", racer,
                "--as-fast-as-possible", "--no-timestamp", "--out-dir", str(out),
            ],
            cwd=REPO, capture_output=True, text=True, timeout=600,
        )
        durations.append(time.monotonic() - t0)
        assert proc.returncode == 0, proc.stderr

    files_a = sorted((tmp_path / "a").iterdir())
    files_b = sorted((tmp_path / "b").iterdir())
    assert [f.name for f in files_a] == [f.name for f in files_b]
    assert len(files_a) == 25 * 2 + 1  # per-course CSV + record JSON + result JSON
    for fa, fb in zip(files_a, files_b):
        assert fa.read_bytes() == fb.read_bytes(), f"{fa.name} differs between runs"

    result = json.loads((tmp_path / "a" / "evaluation_result.json").read_text())
    assert result["seeds"] == list(range(1, 26))
    assert len(result["per_course_scores"]) == 25
    assert max(durations) < 300.0
    report(
        f"determinism: 2x25 courses byte-identical, runtimes "
        f"{durations[0]:.0f}s/{durations[1]:.0f}s (<300 s)"
    )
