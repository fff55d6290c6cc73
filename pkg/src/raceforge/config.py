"""Run configuration: JSON file + dotted-path overrides -> typed config tree.

Every tunable in the simulator lives here with its default. A config is
hashable (sha256 over canonical JSON) so logs can prove which configuration
produced them.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import LpfState, PidState
from .imu import ImuParams
from .noise import NoiseSpec
from .scene import default_course_path
from .sensors import CameraIntrinsics, RangerParams
from .vehicle import VehicleParams, WorldParams, default_x_quad


@dataclass
class VehicleConfig:
    mass: float = 1.0
    arm_length: float = 0.16
    inertia: list = field(default_factory=lambda: [0.0049, 0.0049, 0.0069])
    k_thrust: float = 1.91e-6
    k_torque: float = 2.6e-8
    tau_m: float = 0.02
    drag_force_coeff: float = 0.1
    drag_moment_coeff: list = field(default_factory=lambda: [0.003, 0.003, 0.003])
    force_noise_density: float = 0.05**2
    moment_noise_density: float = 5.0e-4**2
    omega_max: float = 2200.0
    collider_radius: float = 0.2
    motor_init: str = "hover"  # "hover" | "zero"


@dataclass
class ImuConfig:
    accel_noise_std: float = 0.005
    gyro_noise_std: float = 0.001
    accel_bias_density: float = 1e-4**2
    gyro_bias_density: float = 1e-5**2
    accel_bias_init_std: float = 0.02
    gyro_bias_init_std: float = 0.002
    rate: float = 240.0


@dataclass
class ControllerConfig:
    lpf_stiffness: float = 1600.0
    lpf_damping: float = 80.0
    kp: list = field(default_factory=lambda: [40.0, 40.0, 40.0])
    ki: list = field(default_factory=lambda: [10.0, 10.0, 10.0])
    kd: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    integral_limit: float = 1.0
    allocation_param_error: float = 0.0  # fractional k_thrust error fed to allocation


@dataclass
class CameraConfig:
    vertical_fov: float = 70.0
    width: int = 1024
    height: int = 768
    stereo_baseline: float = 0.32
    rate: float = 60.0


@dataclass
class RangerConfig:
    noise_sigma: float = 0.1
    max_range: float = 120.0
    rate: float = 20.0
    direction: list = field(default_factory=lambda: [0.0, 0.0, -1.0])


@dataclass
class CourseConfig:
    path: str = ""  # empty -> bundled default course
    translation_sigma: float = 0.5
    yaw_sigma: float = 0.1


@dataclass
class ServiceConfig:
    port: int = 10253
    ground_truth: bool = False
    state_rate: float = 60.0
    recv_timeout: float = 30.0  # wall seconds before a silent client counts as disconnected


@dataclass
class EvaluationConfig:
    seeds: list = field(default_factory=lambda: list(range(1, 26)))


@dataclass
class SimConfig:
    seed: int = 0
    physics_rate: float = 960.0
    method: str = "rk4"
    time_limit: float = 120.0
    noise_enabled: bool = True
    vehicle: VehicleConfig = field(default_factory=VehicleConfig)
    imu: ImuConfig = field(default_factory=ImuConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    ranger: RangerConfig = field(default_factory=RangerConfig)
    course: CourseConfig = field(default_factory=CourseConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    @property
    def dt(self) -> float:
        return 1.0 / self.physics_rate

    def course_path(self) -> Path:
        return Path(self.course.path) if self.course.path else default_course_path()


class ConfigError(ValueError):
    pass


_SECTIONS = {
    "vehicle": VehicleConfig,
    "imu": ImuConfig,
    "controller": ControllerConfig,
    "camera": CameraConfig,
    "ranger": RangerConfig,
    "course": CourseConfig,
    "service": ServiceConfig,
    "evaluation": EvaluationConfig,
}


def config_from_dict(doc: dict) -> SimConfig:
    cfg = SimConfig()
    known_top = {f.name for f in dataclasses.fields(SimConfig)}
    for key, value in doc.items():
        if key not in known_top:
            raise ConfigError(f"unknown config key {key!r}")
        if key in _SECTIONS:
            section = getattr(cfg, key)
            names = {f.name for f in dataclasses.fields(section)}
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            for k, v in value.items():
                if k not in names:
                    raise ConfigError(f"unknown config key {key}.{k!r}")
                setattr(section, k, v)
        else:
            setattr(cfg, key, value)
    return cfg


def load_config(path=None) -> SimConfig:
    if path is None:
        return SimConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON in {path}: line {err.lineno}: {err.msg}") from err
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a JSON object in {path}")
    return config_from_dict(doc)


def apply_overrides(cfg: SimConfig, overrides) -> SimConfig:
    """Apply `--set section.key=value` pairs; values parse as JSON, else string."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            if not hasattr(target, part):
                raise ConfigError(f"unknown config path {dotted!r}")
            target = getattr(target, part)
        leaf = parts[-1]
        if not dataclasses.is_dataclass(target) or leaf not in {
            f.name for f in dataclasses.fields(target)
        }:
            raise ConfigError(f"unknown config path {dotted!r}")
        setattr(target, leaf, value)
    return cfg


def config_to_dict(cfg: SimConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: SimConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Builders from config to simulation parameter objects

def build_vehicle_params(cfg: SimConfig) -> VehicleParams:
    v = cfg.vehicle
    force_density = v.force_noise_density if cfg.noise_enabled else 0.0
    moment_density = v.moment_noise_density if cfg.noise_enabled else 0.0
    return default_x_quad(
        mass=v.mass,
        arm_length=v.arm_length,
        inertia_diag=tuple(v.inertia),
        k_thrust=v.k_thrust,
        k_torque=v.k_torque,
        tau_m=v.tau_m,
        drag_force_coeff=v.drag_force_coeff,
        drag_moment_coeff_diag=tuple(v.drag_moment_coeff),
        force_noise_density=force_density,
        moment_noise_density=moment_density,
        omega_max=v.omega_max,
        collider_radius=v.collider_radius,
    )


def build_allocation_model(cfg: SimConfig, params: VehicleParams) -> VehicleParams:
    """Vehicle model used by the allocator; optionally detuned from truth."""
    err = cfg.controller.allocation_param_error
    if err == 0.0:
        return params
    v = cfg.vehicle
    return default_x_quad(
        mass=v.mass,
        arm_length=v.arm_length,
        inertia_diag=tuple(v.inertia),
        k_thrust=v.k_thrust * (1.0 + err),
        k_torque=v.k_torque * (1.0 + err),
        tau_m=v.tau_m,
        drag_force_coeff=v.drag_force_coeff,
        drag_moment_coeff_diag=tuple(v.drag_moment_coeff),
        omega_max=v.omega_max,
        collider_radius=v.collider_radius,
    )


def build_imu_params(cfg: SimConfig) -> ImuParams:
    i = cfg.imu
    on = cfg.noise_enabled
    return ImuParams(
        accel_noise_cov=np.eye(3) * (i.accel_noise_std**2 if on else 0.0),
        gyro_noise_cov=np.eye(3) * (i.gyro_noise_std**2 if on else 0.0),
        accel_bias_density=NoiseSpec.isotropic(i.accel_bias_density if on else 0.0),
        gyro_bias_density=NoiseSpec.isotropic(i.gyro_bias_density if on else 0.0),
        accel_bias_init_std=i.accel_bias_init_std if on else 0.0,
        gyro_bias_init_std=i.gyro_bias_init_std if on else 0.0,
        publish_rate=i.rate,
    )


def build_camera(cfg: SimConfig) -> CameraIntrinsics:
    c = cfg.camera
    return CameraIntrinsics(
        vertical_fov=c.vertical_fov,
        width=c.width,
        height=c.height,
        stereo_baseline=c.stereo_baseline,
        frame_rate=c.rate,
    )


def build_ranger(cfg: SimConfig) -> RangerParams:
    r = cfg.ranger
    return RangerParams(
        direction_body=r.direction,
        noise_sigma=r.noise_sigma if cfg.noise_enabled else 0.0,
        max_range=r.max_range,
        rate=r.rate,
    )


def build_lpf(cfg: SimConfig) -> LpfState:
    return LpfState(stiffness=cfg.controller.lpf_stiffness, damping=cfg.controller.lpf_damping)


def build_pid(cfg: SimConfig) -> PidState:
    c = cfg.controller
    return PidState(
        kp=np.diag(c.kp), ki=np.diag(c.ki), kd=np.diag(c.kd), integral_limit=c.integral_limit
    )


def build_world(cfg: SimConfig) -> WorldParams:
    return WorldParams()
