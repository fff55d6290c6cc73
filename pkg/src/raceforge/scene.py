"""Static world geometry: collision primitives, race gates, IR beacons.

A Scene is immutable once built. Gate frames are triangulated into oriented
boxes at construction so that yawed gates remain exactly representable; loose
obstacles are axis-aligned boxes or raw triangles. All queries are pure and
safe for concurrent readers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .rng import make_rng

KIND_TRIANGLE = "triangle"
KIND_BOX = "box"
KIND_GATE_FRAME = "gate-frame"

COURSE_FORMAT_VERSION = 1

_EPS = 1e-12


@dataclass(frozen=True)
class IrBeacon:
    id: int
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.array(self.position, dtype=float))


@dataclass(frozen=True)
class Gate:
    """Rectangular aperture with IR beacons on its four inner corners."""

    id: int
    center: np.ndarray
    normal: np.ndarray
    up: np.ndarray
    width: float
    height: float
    frame_thickness: float = 0.15

    def __post_init__(self):
        center = np.array(self.center, dtype=float)
        normal = np.array(self.normal, dtype=float)
        up = np.array(self.up, dtype=float)
        normal = normal / np.linalg.norm(normal)
        up = up / np.linalg.norm(up)
        if abs(normal @ up) > 1e-9:
            raise ValueError(f"gate {self.id}: normal and up must be perpendicular")
        if self.width <= 0 or self.height <= 0 or self.frame_thickness <= 0:
            raise ValueError(f"gate {self.id}: dimensions must be positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "up", up)

    @property
    def lateral(self) -> np.ndarray:
        return np.cross(self.up, self.normal)

    def corners(self) -> np.ndarray:
        """Aperture corner points, order: (+lat,+up), (-lat,+up), (-lat,-up), (+lat,-up)."""
        w, h = 0.5 * self.width, 0.5 * self.height
        lat, up = self.lateral, self.up
        return np.stack(
            [
                self.center + w * lat + h * up,
                self.center - w * lat + h * up,
                self.center - w * lat - h * up,
                self.center + w * lat - h * up,
            ]
        )

    def beacons(self) -> list[IrBeacon]:
        """Corner beacons with ids gate_id*10 + corner index."""
        return [
            IrBeacon(id=self.id * 10 + i, position=c) for i, c in enumerate(self.corners())
        ]

    def frame_triangles(self) -> np.ndarray:
        """Collidable frame as four oriented-box bars around the aperture."""
        t = self.frame_thickness
        lat, up, nrm = self.lateral, self.up, self.normal
        w, h = 0.5 * self.width, 0.5 * self.height
        bars = [
            (self.center + (w + t / 2) * lat, (t / 2, h + t, t / 2)),
            (self.center - (w + t / 2) * lat, (t / 2, h + t, t / 2)),
            (self.center + (h + t / 2) * up, (w + t, t / 2, t / 2)),
            (self.center - (h + t / 2) * up, (w + t, t / 2, t / 2)),
        ]
        axes = np.stack([lat, up, nrm], axis=1)
        return np.concatenate(
            [_oriented_box_triangles(c, axes, half) for c, half in bars]
        )


@dataclass(frozen=True)
class RayHit:
    distance: float
    point: np.ndarray
    object_kind: str


@dataclass(frozen=True)
class Contact:
    distance: float
    point: np.ndarray
    object_kind: str


def _oriented_box_triangles(center, axes, half_sizes) -> np.ndarray:
    hx, hy, hz = half_sizes
    corners = np.array(
        [
            [sx * hx, sy * hy, sz * hz]
            for sx in (-1, 1)
            for sy in (-1, 1)
            for sz in (-1, 1)
        ]
    )
    pts = center + corners @ axes.T
    # index pairs per face of the (-,+)^3 corner lattice
    faces = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    tris = []
    for a, b, c, d in faces:
        tris.append([pts[a], pts[b], pts[c]])
        tris.append([pts[a], pts[c], pts[d]])
    return np.array(tris)


class Scene:
    """Compiled immutable scene; build once, query many times."""

    def __init__(self, triangles=None, boxes=None, gates=None, static_beacons=None, name=""):
        self.name = name
        self.gates: list[Gate] = list(gates or [])
        self.static_beacons: list[IrBeacon] = list(static_beacons or [])
        self.triangles = (
            np.array(triangles, dtype=float).reshape(-1, 3, 3)
            if triangles is not None and len(triangles)
            else np.zeros((0, 3, 3))
        )
        self.boxes = (
            np.array(boxes, dtype=float).reshape(-1, 2, 3)
            if boxes is not None and len(boxes)
            else np.zeros((0, 2, 3))
        )
        if not np.isfinite(self.triangles).all() or not np.isfinite(self.boxes).all():
            raise ValueError("scene geometry must be finite")

        ids = [g.id for g in self.gates]
        if len(set(ids)) != len(ids):
            raise ValueError("gate ids must be unique")

        beacons = list(self.static_beacons)
        for g in self.gates:
            beacons.extend(g.beacons())
        bids = [b.id for b in beacons]
        if len(set(bids)) != len(bids):
            raise ValueError("beacon ids must be unique")
        self.beacons = sorted(beacons, key=lambda b: b.id)
        self.beacon_ids = np.array([b.id for b in self.beacons], dtype=int)
        self.beacon_positions = (
            np.stack([b.position for b in self.beacons])
            if self.beacons
            else np.zeros((0, 3))
        )

        tris = [self.triangles]
        kinds = [KIND_TRIANGLE] * len(self.triangles)
        groups = [np.zeros(len(self.triangles), dtype=int)]
        for gi, g in enumerate(self.gates):
            frame = g.frame_triangles()
            tris.append(frame)
            kinds.extend([KIND_GATE_FRAME] * len(frame))
            groups.append(np.full(len(frame), gi + 1, dtype=int))
        self._tris = np.concatenate(tris) if tris else np.zeros((0, 3, 3))
        self._tri_kinds = kinds
        # Möller-Trumbore precomputation + two-level bounding spheres
        # (per-triangle, and per group: loose triangles / one group per gate)
        if len(self._tris):
            self._tri_v0 = np.ascontiguousarray(self._tris[:, 0])
            self._tri_e1 = np.ascontiguousarray(self._tris[:, 1] - self._tris[:, 0])
            self._tri_e2 = np.ascontiguousarray(self._tris[:, 2] - self._tris[:, 0])
            centroid = self._tris.mean(axis=1)
            self._tri_centroid = centroid
            self._tri_radius = np.sqrt(
                ((self._tris - centroid[:, None, :]) ** 2).sum(axis=2).max(axis=1)
            )
            tri_group = np.concatenate(groups)
            n_groups = int(tri_group.max()) + 1
            self._group_members = [np.where(tri_group == g)[0] for g in range(n_groups)]
            self._group_center = np.zeros((n_groups, 3))
            self._group_radius = np.zeros(n_groups)
            for g, members in enumerate(self._group_members):
                if len(members):
                    pts = self._tris[members].reshape(-1, 3)
                    center = pts.mean(axis=0)
                    self._group_center[g] = center
                    self._group_radius[g] = np.linalg.norm(pts - center, axis=1).max()
        else:
            self._tri_v0 = self._tri_e1 = self._tri_e2 = np.zeros((0, 3))
            self._tri_centroid = np.zeros((0, 3))
            self._tri_radius = np.zeros(0)
            self._group_members = []
            self._group_center = np.zeros((0, 3))
            self._group_radius = np.zeros(0)

    @property
    def num_elements(self) -> int:
        return len(self._tris) + len(self.boxes)

    def with_gates(self, gates) -> "Scene":
        return Scene(
            triangles=self.triangles,
            boxes=self.boxes,
            gates=gates,
            static_beacons=self.static_beacons,
            name=self.name,
        )


def ray_cast(origin, direction, scene: Scene, max_range: float) -> RayHit | None:
    """Nearest intersection of a half-line with the scene, or None.

    Direction must be unit length within 1e-9. Only hits with t > 0 and
    t <= max_range count.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        raise ValueError("ray direction must be non-zero")
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"ray direction norm {norm} deviates from 1 beyond 1e-9")

    best_t = math.inf
    best_kind = None

    if len(scene._tris):
        t = _ray_triangles(origin, direction, scene._tri_v0, scene._tri_e1, scene._tri_e2)
        valid = (t > _EPS) & (t <= max_range)
        if valid.any():
            idx = np.where(valid, t, math.inf).argmin()
            best_t = t[idx]
            best_kind = scene._tri_kinds[idx]

    if len(scene.boxes):
        t = _ray_boxes(origin, direction, scene.boxes)
        valid = (t > _EPS) & (t <= max_range) & (t < best_t)
        if valid.any():
            idx = np.where(valid, t, math.inf).argmin()
            best_t = t[idx]
            best_kind = KIND_BOX

    if best_kind is None:
        return None
    return RayHit(distance=float(best_t), point=origin + best_t * direction, object_kind=best_kind)


def _cross_rows(a, b):
    """Row-wise cross product without np.cross's axis-juggling overhead."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def _ray_triangles(origin, direction, v0, e1, e2):
    """Vectorized Möller-Trumbore; returns hit parameter t per triangle (inf = miss)."""
    pvec = _cross_rows(direction, e2)
    det = (e1 * pvec).sum(axis=1)
    near_parallel = np.abs(det) < _EPS
    inv_det = np.where(near_parallel, 0.0, 1.0 / np.where(near_parallel, 1.0, det))
    tvec = origin - v0
    u = (tvec * pvec).sum(axis=1) * inv_det
    qvec = _cross_rows(tvec, e1)
    v = (direction * qvec).sum(axis=1) * inv_det
    t = (e2 * qvec).sum(axis=1) * inv_det
    miss = near_parallel | (u < 0.0) | (u > 1.0) | (v < 0.0) | (u + v > 1.0) | (t <= _EPS)
    return np.where(miss, math.inf, t)


def _ray_boxes(origin, direction, boxes):
    """Vectorized slab test; returns entry parameter t per AABB (inf = miss)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / direction
        t0 = (boxes[:, 0] - origin) * inv
        t1 = (boxes[:, 1] - origin) * inv
        tmin = np.nanmax(np.minimum(t0, t1), axis=1)
        tmax = np.nanmin(np.maximum(t0, t1), axis=1)
    hit = (tmax >= np.maximum(tmin, 0.0)) & (tmax > _EPS)
    # origin inside the box: entry at tmin < 0, report the exit face instead
    t = np.where(tmin > _EPS, tmin, tmax)
    return np.where(hit, t, math.inf)


@njit(cache=True)
def _mt_nearest_kernel(origin, directions, v0, e1, e2, eps):
    """Nearest Möller-Trumbore hit parameter per ray over all triangles."""
    k = directions.shape[0]
    m = v0.shape[0]
    best = np.full(k, np.inf)
    for r in range(k):
        dx, dy, dz = directions[r, 0], directions[r, 1], directions[r, 2]
        tbest = np.inf
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
            u = (tx * px + ty * py + tz * pz) * inv
            if u < 0.0 or u > 1.0:
                continue
            qx = ty * e1z - tz * e1y
            qy = tz * e1x - tx * e1z
            qz = tx * e1y - ty * e1x
            v = (dx * qx + dy * qy + dz * qz) * inv
            if v < 0.0 or u + v > 1.0:
                continue
            t = (e2x * qx + e2y * qy + e2z * qz) * inv
            if eps < t < tbest:
                tbest = t
        best[r] = tbest
    return best


def ray_cast_batch(origin, directions, scene: Scene, max_ranges):
    """Nearest-hit parameter for many unit rays from one origin.

    Returns an array of hit distances (inf where nothing is hit within the
    per-ray max range). Equivalent to looping ray_cast but runs the compiled
    all-pairs kernel; used by the beacon occlusion test every camera frame.
    """
    origin = np.ascontiguousarray(origin, dtype=float)
    directions = np.ascontiguousarray(directions, dtype=float)
    max_ranges = np.asarray(max_ranges, dtype=float)
    k = len(directions)
    best = np.full(k, math.inf)
    if k == 0:
        return best
    if len(scene._tris):
        best = _mt_nearest_kernel(
            origin, directions, scene._tri_v0, scene._tri_e1, scene._tri_e2, _EPS
        )
    if len(scene.boxes):
        boxes = scene.boxes
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / directions  # (k,3)
            t0 = (boxes[None, :, 0] - origin) * inv[:, None, :]
            t1 = (boxes[None, :, 1] - origin) * inv[:, None, :]
            tmin = np.nanmax(np.minimum(t0, t1), axis=2)
            tmax = np.nanmin(np.maximum(t0, t1), axis=2)
        hit = (tmax >= np.maximum(tmin, 0.0)) & (tmax > _EPS)
        t = np.where(tmin > _EPS, tmin, tmax)
        t = np.where(hit, t, math.inf).min(axis=1)
        best = np.minimum(best, t)
    return np.where(best <= max_ranges, best, math.inf)


@njit(cache=True)
def _near_groups_kernel(p, radius, centers, radii, out):
    n = centers.shape[0]
    count = 0
    for g in range(n):
        dx = centers[g, 0] - p[0]
        dy = centers[g, 1] - p[1]
        dz = centers[g, 2] - p[2]
        reach = radius + radii[g]
        if dx * dx + dy * dy + dz * dz <= reach * reach:
            out[count] = g
            count += 1
    return count


@njit(cache=True)
def _nearest_box_kernel(p, boxes):
    best_d2 = np.inf
    best = -1
    cx = cy = cz = 0.0
    for i in range(boxes.shape[0]):
        x = min(max(p[0], boxes[i, 0, 0]), boxes[i, 1, 0])
        y = min(max(p[1], boxes[i, 0, 1]), boxes[i, 1, 1])
        z = min(max(p[2], boxes[i, 0, 2]), boxes[i, 1, 2])
        dx, dy, dz = x - p[0], y - p[1], z - p[2]
        d2 = dx * dx + dy * dy + dz * dz
        if d2 < best_d2:
            best_d2 = d2
            best = i
            cx, cy, cz = x, y, z
    return best, best_d2, cx, cy, cz


def check_collision(position, radius: float, scene: Scene) -> Contact | None:
    """Nearest scene element within `radius` of a sphere center, or None."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    p = np.ascontiguousarray(position, dtype=float)

    best = None
    n_groups = len(scene._group_center)
    if n_groups:
        # group spheres first (gates / loose triangles), then per-triangle spheres
        scratch = np.empty(n_groups, dtype=np.int64)
        count = _near_groups_kernel(p, radius, scene._group_center, scene._group_radius, scratch)
        if count:
            cand = np.concatenate([scene._group_members[g] for g in scratch[:count]])
            rel = scene._tri_centroid[cand] - p
            d2 = (rel * rel).sum(axis=1)
            cand = cand[d2 <= (radius + scene._tri_radius[cand]) ** 2]
            if len(cand):
                d, pts = _point_triangle_distance(
                    p, scene._tris[cand], scene._tri_e1[cand], scene._tri_e2[cand]
                )
                i = d.argmin()
                if d[i] <= radius:
                    best = Contact(float(d[i]), pts[i], scene._tri_kinds[cand[i]])

    if len(scene.boxes):
        i, d2, cx, cy, cz = _nearest_box_kernel(p, scene.boxes)
        d = math.sqrt(d2)
        if d <= radius and (best is None or d < best.distance):
            best = Contact(d, np.array([cx, cy, cz]), KIND_BOX)
    return best


def _point_triangle_distance(p, tris, e1, e2):
    """Distance from point to each triangle and the closest points.

    Face distance applies only where the plane foot lies inside the triangle;
    otherwise the minimum over the three edge segments is exact.
    """
    v0 = tris[:, 0]
    n = np.cross(e1, e2)
    nn = (n * n).sum(axis=1)
    nn_safe = np.where(nn < _EPS, 1.0, nn)
    rel = p - v0
    dist_plane = (rel * n).sum(axis=1) / np.sqrt(nn_safe)
    foot = p - dist_plane[:, None] * (n / np.sqrt(nn_safe)[:, None])
    # barycentric inside test for the foot point
    d00 = (e1 * e1).sum(axis=1)
    d01 = (e1 * e2).sum(axis=1)
    d11 = (e2 * e2).sum(axis=1)
    fp = foot - v0
    d20 = (fp * e1).sum(axis=1)
    d21 = (fp * e2).sum(axis=1)
    denom = d00 * d11 - d01 * d01
    denom_safe = np.where(np.abs(denom) < _EPS, 1.0, denom)
    bv = (d11 * d20 - d01 * d21) / denom_safe
    bw = (d00 * d21 - d01 * d20) / denom_safe
    inside = (bv >= 0) & (bw >= 0) & (bv + bw <= 1) & (np.abs(denom) >= _EPS) & (nn >= _EPS)

    best_d = np.where(inside, np.abs(dist_plane), math.inf)
    best_pt = foot.copy()

    verts = (v0, tris[:, 1], tris[:, 2])
    for a, b in ((0, 1), (1, 2), (2, 0)):
        seg = verts[b] - verts[a]
        seg_len = (seg * seg).sum(axis=1)
        tpar = ((p - verts[a]) * seg).sum(axis=1) / np.where(seg_len < _EPS, 1.0, seg_len)
        tpar = np.clip(tpar, 0.0, 1.0)
        pt = verts[a] + tpar[:, None] * seg
        d = np.linalg.norm(pt - p, axis=1)
        closer = d < best_d
        best_d = np.where(closer, d, best_d)
        best_pt = np.where(closer[:, None], pt, best_pt)
    return best_d, best_pt


def gate_pass_check(prev_position, position, gate: Gate) -> bool:
    """True iff the step segment crosses the gate plane along +normal inside the aperture."""
    prev_position = np.asarray(prev_position, dtype=float)
    position = np.asarray(position, dtype=float)
    s0 = (prev_position - gate.center) @ gate.normal
    s1 = (position - gate.center) @ gate.normal
    if not (s0 < 0.0 <= s1):
        return False
    denom = s1 - s0
    if denom <= 0.0:
        return False
    cross_pt = prev_position + (position - prev_position) * (-s0 / denom)
    rel = cross_pt - gate.center
    return (
        abs(rel @ gate.lateral) <= 0.5 * gate.width
        and abs(rel @ gate.up) <= 0.5 * gate.height
    )


def perturb_course(
    scene: Scene, seed: int, translation_sigma: float, yaw_sigma: float
) -> Scene:
    """Bounded random displacement of every gate, rigid with its beacons.

    Each gate draws independently from its own (seed, gate id) stream:
    translation uniform in [-2σ, 2σ]³ and yaw uniform in [-2σ_yaw, 2σ_yaw]
    about world z through the gate center. Layout order is preserved.
    """
    if translation_sigma < 0 or yaw_sigma < 0:
        raise ValueError("perturbation sigmas must be non-negative")
    new_gates = []
    for gate in scene.gates:
        rng = make_rng(seed, "perturbation", substream=gate.id)
        shift = rng.uniform(-2.0 * translation_sigma, 2.0 * translation_sigma, 3)
        yaw = rng.uniform(-2.0 * yaw_sigma, 2.0 * yaw_sigma)
        c, s = math.cos(yaw), math.sin(yaw)
        rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        new_gates.append(
            Gate(
                id=gate.id,
                center=gate.center + shift,
                normal=rz @ gate.normal,
                up=rz @ gate.up,
                width=gate.width,
                height=gate.height,
                frame_thickness=gate.frame_thickness,
            )
        )
    return scene.with_gates(new_gates)


# ---------------------------------------------------------------------------
# Course file I/O

def load_course(path) -> tuple[Scene, dict]:
    """Load a course JSON file; returns (scene, start pose dict)."""
    path = Path(path)
    with open(path) as f:
        doc = json.load(f)
    version = doc.get("format_version")
    if version != COURSE_FORMAT_VERSION:
        raise ValueError(f"unsupported course format_version {version!r} in {path}")
    gates = [
        Gate(
            id=int(g["id"]),
            center=g["center"],
            normal=g["normal"],
            up=g.get("up", (0.0, 0.0, 1.0)),
            width=float(g["width"]),
            height=float(g["height"]),
            frame_thickness=float(g.get("frame_thickness", 0.15)),
        )
        for g in doc.get("gates", [])
    ]
    static_beacons = [
        IrBeacon(id=int(b["id"]), position=b["position"])
        for b in doc.get("static_beacons", [])
    ]
    boxes = [(b["min"], b["max"]) for b in doc.get("boxes", [])]
    scene = Scene(
        triangles=doc.get("triangles"),
        boxes=boxes if boxes else None,
        gates=gates,
        static_beacons=static_beacons,
        name=doc.get("name", path.stem),
    )
    start = doc.get("start", {"position": [0.0, 0.0, 2.0], "yaw": 0.0})
    return scene, start


def default_course_path() -> Path:
    return Path(__file__).parent / "courses" / "default_course.json"
