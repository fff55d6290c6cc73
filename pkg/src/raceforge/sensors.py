"""Geometric exteroceptive sensors: pinhole projection, IR beacons, ranger.

No imagery is synthesized. The camera contributes a projection model and
frame timing; the IR beacon sensor returns exact image-space reprojections of
unoccluded beacons; the time-of-flight ranger is a single noisy ray.

Image convention: origin top-left, u right, v down. Camera frame: x right,
y down, z forward (optical axis).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .quat import quat_to_rotmat
from .scene import Scene, ray_cast
from .vehicle import VehicleState


@dataclass(frozen=True)
class RigidTransform:
    """x_parent = rotation @ x_local + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be orthogonal")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", np.array(self.translation, dtype=float))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return _rt_unchecked(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return _rt_unchecked(self.rotation.T, -(self.rotation.T @ self.translation))

    def apply(self, point):
        return self.rotation @ np.asarray(point, dtype=float) + self.translation


def _rt_unchecked(rotation, translation) -> RigidTransform:
    """Internal constructor for transforms already known to be rigid."""
    rt = object.__new__(RigidTransform)
    object.__setattr__(rt, "rotation", rotation)
    object.__setattr__(rt, "translation", translation)
    return rt


# camera axes in body coordinates: z_cam = +x_body, x_cam = -y_body, y_cam = -z_body
FORWARD_CAMERA_IN_BODY = RigidTransform(
    rotation=np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]),
    translation=np.zeros(3),
)


@dataclass(frozen=True)
class CameraIntrinsics:
    vertical_fov: float = 70.0        # degrees
    width: int = 1024                 # px
    height: int = 768                 # px
    stereo_baseline: float = 0.32     # m
    extrinsics_body_to_camera: RigidTransform = field(
        default_factory=lambda: FORWARD_CAMERA_IN_BODY
    )
    frame_rate: float = 60.0

    def __post_init__(self):
        if not (0.0 < self.vertical_fov < 180.0):
            raise ValueError("vertical fov must lie in (0, 180) degrees")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if self.stereo_baseline < 0:
            raise ValueError("stereo baseline must be non-negative")

    @property
    def focal_px(self) -> float:
        return (self.height / 2.0) / math.tan(math.radians(self.vertical_fov) / 2.0)

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.width / 2.0, self.height / 2.0)


@dataclass(frozen=True)
class BeaconObservation:
    beacon_id: int
    u: float
    v: float


@dataclass(frozen=True)
class RangerParams:
    direction_body: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    noise_sigma: float = 0.1
    max_range: float = 120.0
    rate: float = 20.0

    def __post_init__(self):
        d = np.array(self.direction_body, dtype=float)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError("ranger direction must be non-zero")
        if self.noise_sigma < 0 or self.max_range <= 0:
            raise ValueError("need noise_sigma >= 0 and max_range > 0")
        object.__setattr__(self, "direction_body", d / n)


def camera_pose_world(state: VehicleState, intr: CameraIntrinsics) -> RigidTransform:
    """World pose of the (left) camera for the current vehicle state."""
    body = _rt_unchecked(quat_to_rotmat(state.attitude), state.position)
    return body.compose(intr.extrinsics_body_to_camera)


def right_camera_pose(left_pose: RigidTransform, intr: CameraIntrinsics) -> RigidTransform:
    """Right stereo camera: left pose translated by the baseline along camera x."""
    offset = left_pose.rotation @ np.array([intr.stereo_baseline, 0.0, 0.0])
    return RigidTransform(rotation=left_pose.rotation, translation=left_pose.translation + offset)


def project_point(point_world, camera_pose: RigidTransform, intr: CameraIntrinsics):
    """Distortion-free pinhole projection to (u, v), or None if not imaged.

    Points at or behind the image plane and points projecting outside the
    (inclusive) pixel bounds return None. The subtract-then-rotate order
    matches the beacon sensor's compiled path bit for bit.
    """
    rel = np.asarray(point_world, dtype=float) - camera_pose.translation
    p = camera_pose.rotation.T @ rel
    if p[2] <= 0.0:
        return None
    f = intr.focal_px
    cx, cy = intr.principal_point
    u = cx + f * p[0] / p[2]
    v = cy + f * p[1] / p[2]
    if not (0.0 <= u <= intr.width and 0.0 <= v <= intr.height):
        return None
    return (u, v)


@njit(cache=True)
def _beacon_visibility_kernel(
    rot, origin, positions, focal, cx, cy, width, height, v0, e1, e2, boxes, eps, out
):
    """Project beacons and occlusion-test the in-image ones in one pass.

    Writes (beacon index, u, v) rows into `out` and returns the row count.
    The occlusion scan exits on the first blocking hit (any geometry strictly
    closer than the beacon, with the 1 cm slack applied by the caller via the
    segment length), so unoccluded open-air rays stay cheap.
    """
    n = positions.shape[0]
    m = v0.shape[0]
    nboxes = boxes.shape[0]
    count = 0
    for b in range(n):
        relx = positions[b, 0] - origin[0]
        rely = positions[b, 1] - origin[1]
        relz = positions[b, 2] - origin[2]
        # camera coordinates: p_cam = R^T (p - t)
        pxc = rot[0, 0] * relx + rot[1, 0] * rely + rot[2, 0] * relz
        pyc = rot[0, 1] * relx + rot[1, 1] * rely + rot[2, 1] * relz
        pzc = rot[0, 2] * relx + rot[1, 2] * rely + rot[2, 2] * relz
        if pzc <= 0.0:
            continue
        u = cx + focal * pxc / pzc
        if u < 0.0 or u > width:
            continue
        v = cy + focal * pyc / pzc
        if v < 0.0 or v > height:
            continue
        dist = math.sqrt(relx * relx + rely * rely + relz * relz)
        occluded = False
        if dist > 1e-9:
            inv_dist = 1.0 / dist
            dx, dy, dz = relx * inv_dist, rely * inv_dist, relz * inv_dist
            limit = dist - 0.01
            for i in range(m):
                e1x, e1y, e1z = e1[i, 0], e1[i, 1], e1[i, 2]
                e2x, e2y, e2z = e2[i, 0], e2[i, 1], e2[i, 2]
                px = dy * e2z - dz * e2y
                py = dz * e2x - dx * e2z
                pz = dx * e2y - dy * e2x
                det = e1x * px + e1y * py + e1z * pz
                if -eps < det < eps:
                    continue
                inv = 1.0 / det
                tx = origin[0] - v0[i, 0]
                ty = origin[1] - v0[i, 1]
                tz = origin[2] - v0[i, 2]
                uu = (tx * px + ty * py + tz * pz) * inv
                if uu < 0.0 or uu > 1.0:
                    continue
                qx = ty * e1z - tz * e1y
                qy = tz * e1x - tx * e1z
                qz = tx * e1y - ty * e1x
                vv = (dx * qx + dy * qy + dz * qz) * inv
                if vv < 0.0 or uu + vv > 1.0:
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * inv
                if eps < t <= limit:
                    occluded = True
                    break
            if not occluded:
                for i in range(nboxes):
                    tmin = -np.inf
                    tmax = np.inf
                    ok = True
                    for ax in range(3):
                        d_ax = dx if ax == 0 else (dy if ax == 1 else dz)
                        o_ax = origin[ax]
                        lo = boxes[i, 0, ax]
                        hi = boxes[i, 1, ax]
                        if d_ax == 0.0:
                            if o_ax < lo or o_ax > hi:
                                ok = False
                                break
                            continue
                        t0 = (lo - o_ax) / d_ax
                        t1 = (hi - o_ax) / d_ax
                        if t0 > t1:
                            t0, t1 = t1, t0
                        if t0 > tmin:
                            tmin = t0
                        if t1 < tmax:
                            tmax = t1
                    if not ok or tmax < max(tmin, 0.0) or tmax <= eps:
                        continue
                    t = tmin if tmin > eps else tmax
                    if t <= limit:
                        occluded = True
                        break
        if not occluded:
            out[count, 0] = b
            out[count, 1] = u
            out[count, 2] = v
            count += 1
    return count


def sense_ir_beacons(
    camera_pose: RigidTransform, scene: Scene, intr: CameraIntrinsics
) -> list[BeaconObservation]:
    """Image-space observations of every visible, unoccluded beacon.

    Occlusion uses a ray cast from the camera center toward the beacon; any
    geometry strictly closer than the beacon (1 cm slack, so a beacon sitting
    on its own gate frame still registers) suppresses the observation.
    Output is sorted by beacon id.
    """
    n = len(scene.beacon_positions)
    if not n:
        return []
    out = np.empty((n, 3))
    count = _beacon_visibility_kernel(
        np.ascontiguousarray(camera_pose.rotation),
        np.ascontiguousarray(camera_pose.translation),
        scene.beacon_positions,
        intr.focal_px,
        intr.width / 2.0,
        intr.height / 2.0,
        float(intr.width),
        float(intr.height),
        scene._tri_v0,
        scene._tri_e1,
        scene._tri_e2,
        scene.boxes,
        1e-12,
        out,
    )
    # the kernel decides visibility; the published pixel values come from
    # project_point itself so observations equal reprojections bit for bit
    observations = []
    for i in range(count):
        idx = int(out[i, 0])
        uv = project_point(scene.beacon_positions[idx], camera_pose, intr)
        if uv is not None:
            observations.append(
                BeaconObservation(beacon_id=int(scene.beacon_ids[idx]), u=uv[0], v=uv[1])
            )
    return observations


def sense_range(state: VehicleState, scene: Scene, params: RangerParams, rng=None):
    """Time-of-flight range along the body-fixed ray, or None when out of range."""
    direction = quat_to_rotmat(state.attitude) @ params.direction_body
    hit = ray_cast(state.position, direction, scene, max_range=params.max_range)
    if hit is None:
        return None
    value = hit.distance
    if rng is not None and params.noise_sigma > 0.0:
        value += params.noise_sigma * rng.standard_normal()
    return max(value, 0.0)
