"""Single-vehicle episode simulator.

Owns the physics loop state: vehicle, IMU, onboard rate controller, race
progress and the per-consumer noise streams. One `step()` call advances one
fixed 1/960 s physics step and reports whatever sensor samples fell due at
the step's starting boundary.

Episode lifecycle: the vehicle spawns at rest at the course start pose with
live dynamics and a zero command held (an idle client's vehicle simply falls).
The first rate command starts the race clock ("armed" -> "running"); the
episode ends on collision, on crossing the final gate, or at the time limit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from .clock import SimClock
from .controller import RateCommand, RateController
from .imu import ImuState, measure_imu, propagate_bias
from .noise import BlockSampler
from .quat import quat_from_yaw
from .race import RaceRecord, RaceState, update_race
from .rng import make_rng
from .scene import Scene, load_course
from .sensors import camera_pose_world, sense_ir_beacons, sense_range
from .vehicle import VehicleState, aero_drag, step_vehicle_with_noise, thrust_and_moment

PHASE_ARMED = "armed"
PHASE_RUNNING = "running"
PHASE_ENDED = "ended"


@dataclass
class StepOutput:
    """Sensor samples due at the step's starting boundary plus step events."""

    sample_time: float
    imu: tuple | None = None
    ranger_due: bool = False
    range_value: float | None = None
    beacons: list | None = None
    camera_pose: object = None
    state_due: bool = False
    events: list = field(default_factory=list)


@dataclass
class LogRow:
    sim_time: float
    state: VehicleState
    events: list


class Simulator:
    def __init__(self, cfg: cfgmod.SimConfig, scene: Scene | None = None, start=None):
        self.cfg = cfg
        if scene is None:
            scene, start = load_course(cfg.course_path())
        elif start is None:
            start = {"position": [0.0, 0.0, 2.0], "yaw": 0.0}
        self.scene = scene

        self.params = cfgmod.build_vehicle_params(cfg)
        self.world = cfgmod.build_world(cfg)
        self.imu_params = cfgmod.build_imu_params(cfg)
        self.camera = cfgmod.build_camera(cfg)
        self.ranger = cfgmod.build_ranger(cfg)
        self.clock = SimClock(dt=cfg.dt)
        self.method = cfg.method

        rate = cfg.physics_rate
        self._divisors = {}
        for name, hz in (
            ("imu", cfg.imu.rate),
            ("camera", cfg.camera.rate),
            ("ranger", cfg.ranger.rate),
            ("state", cfg.service.state_rate),
        ):
            if hz <= 0 or rate % hz != 0:
                raise cfgmod.ConfigError(f"{name} rate {hz} must divide physics rate {rate}")
            self._divisors[name] = int(rate // hz)

        seed = cfg.seed
        self.rng_force = make_rng(seed, "vehicle-force")
        self.rng_moment = make_rng(seed, "vehicle-moment")
        self.rng_accel_bias = make_rng(seed, "accel-bias")
        self.rng_gyro_bias = make_rng(seed, "gyro-bias")
        self.rng_accel_noise = make_rng(seed, "accel-noise")
        self.rng_gyro_noise = make_rng(seed, "gyro-noise")
        self.rng_ranger = make_rng(seed, "ranger")
        self._force_sampler = BlockSampler(self.params.force_noise, cfg.dt, self.rng_force)
        self._moment_sampler = BlockSampler(self.params.moment_noise, cfg.dt, self.rng_moment)

        yaw = float(start.get("yaw", 0.0))
        self.state = VehicleState.at_rest(
            position=start["position"],
            attitude=quat_from_yaw(yaw),
            num_motors=self.params.num_motors,
        )
        if cfg.vehicle.motor_init == "hover":
            self.state.motor_speeds[:] = self.params.hover_speed(self.world)
        elif cfg.vehicle.motor_init != "zero":
            raise cfgmod.ConfigError("vehicle.motor_init must be 'hover' or 'zero'")

        self.imu_state = ImuState.with_random_initial_bias(
            self.imu_params, self.rng_accel_bias, self.rng_gyro_bias
        )
        self.controller = RateController(
            self.params,
            lpf=cfgmod.build_lpf(cfg),
            pid=cfgmod.build_pid(cfg),
            model_params=cfgmod.build_allocation_model(cfg, self.params),
        )

        self.race = RaceState(
            scene=scene,
            collider_radius=self.params.collider_radius,
            time_limit=cfg.time_limit,
        )
        self.phase = PHASE_ARMED
        self.outcome = None
        self._pending_events: list = []
        self._motor_cmds = self.state.motor_speeds.copy()
        self.rows: list[LogRow] = []
        self.keep_rows = True
        self._latest_imu = None

    # -- lifecycle ----------------------------------------------------------

    @property
    def sim_time(self) -> float:
        return self.clock.sim_time

    def apply_command(self, cmd: RateCommand):
        """Apply a client rate command at a step boundary (zero-order hold)."""
        if self.phase == PHASE_ENDED:
            return
        self.controller.set_command(cmd)
        if self.phase == PHASE_ARMED:
            self.phase = PHASE_RUNNING
            self.race.start(self.sim_time)
            self._pending_events.append(("race_start",))

    def end_episode(self, outcome: str):
        if self.phase != PHASE_ENDED:
            self.phase = PHASE_ENDED
            self.outcome = outcome
            if not self.race.ended:
                self.race.ended = True
                self.race.end_time = self.sim_time
            self._flush_row()

    def record(self) -> RaceRecord:
        return self.race.record(self.sim_time)

    # -- stepping -----------------------------------------------------------

    def step(self) -> StepOutput:
        """Advance one physics step; returns sensors due at the entry boundary."""
        k = self.clock.step_index
        t = self.clock.sim_time
        out = StepOutput(sample_time=t, events=[])

        if self.keep_rows:
            self.rows.append(LogRow(sim_time=t, state=self.state.copy(), events=self._pending_events))
        self._pending_events = []

        noise_force = self._force_sampler.draw()
        noise_moment = self._moment_sampler.draw()

        if k % self._divisors["imu"] == 0:
            dt_imu = self.clock.dt * self._divisors["imu"]
            if k > 0:
                self.imu_state = propagate_bias(
                    self.imu_state, dt_imu, self.imu_params, self.rng_accel_bias, self.rng_gyro_bias
                )
            thrust_body, _ = thrust_and_moment(self.state.motor_speeds, self.params)
            drag_world, _ = aero_drag(self.state.velocity, self.state.body_rate, self.params)
            accel, rate = measure_imu(
                self.state,
                thrust_body,
                drag_world,
                noise_force,
                self.imu_state,
                self.imu_params,
                self.params.mass,
                self.rng_accel_noise,
                self.rng_gyro_noise,
            )
            self.controller.set_gyro(rate)
            self._latest_imu = (accel, rate)
            out.imu = (accel, rate)

        if k % self._divisors["ranger"] == 0:
            out.ranger_due = True
            out.range_value = sense_range(self.state, self.scene, self.ranger, self.rng_ranger)

        if k % self._divisors["camera"] == 0:
            pose = camera_pose_world(self.state, self.camera)
            out.camera_pose = pose
            out.beacons = sense_ir_beacons(pose, self.scene, self.camera)

        if k % self._divisors["state"] == 0:
            out.state_due = True

        self._motor_cmds = self.controller.step(self.clock.dt, self.method)
        prev_position = self.state.position
        self.state = step_vehicle_with_noise(
            self.state,
            self._motor_cmds,
            self.clock.dt,
            self.method,
            noise_force,
            noise_moment,
            self.params,
            self.world,
            step_index=k,
        )
        self.clock.advance()
        events = update_race(self.race, prev_position, self.state.position, self.sim_time)
        self._pending_events.extend(events)
        out.events = events
        if self.race.ended:
            self.end_episode("finished" if self.race.finished else
                             "collision" if self.race.collided else "timeout")
        return out

    def _flush_row(self):
        if self.keep_rows:
            self.rows.append(
                LogRow(sim_time=self.sim_time, state=self.state.copy(), events=self._pending_events)
            )
            self._pending_events = []

    # -- ground truth for the optional state stream --------------------------

    def state_snapshot(self) -> dict:
        s = self.state
        return {
            "position": s.position.tolist(),
            "velocity": s.velocity.tolist(),
            "attitude": s.attitude.tolist(),
            "body_rate": s.body_rate.tolist(),
            "motor_speeds": s.motor_speeds.tolist(),
            "applied_motor_commands": np.asarray(self._motor_cmds).tolist(),
        }
