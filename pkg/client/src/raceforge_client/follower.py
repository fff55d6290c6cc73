"""Example gate-following controller: a pure IR-beacon visual servo.

Deliberately naive — it exists to exercise the whole protocol, not to win
races. It integrates the gyro for an attitude estimate (after a short
standstill bias calibration), reconstructs the armed gate's center in image
space from whichever corner beacons are visible (corner ids encode their
position on the gate), and steers with proportional laws:

  * yaw and roll center the gate horizontally; a perspective-symmetry term
    (the nearer corner pair projects taller) kills cross-track error,
  * thrust servos the pitch-compensated vertical error,
  * a fixed nose-down pitch provides forward speed.

Close to the gate the corners leave the field of view, so once the gate
fills the image and is centered the follower commits: wings level, straight
through. If it arrives misaligned it brakes and goes around; if the beacons
are lost it brakes, holds altitude on the ranger, and yaw-scans until they
reappear.

Run directly (host/port from RACEFORGE_HOST / RACEFORGE_PORT):

    python -m raceforge_client.follower
"""
from __future__ import annotations

import math
import os

from .session import ClientSession, connect

GRAVITY = 9.81

# corner index -> (lateral sign, up sign); +lateral projects image-left,
# +up projects image-up, matching the gate corner layout in docs/protocol.md
CORNER_SIGNS = {0: (1.0, 1.0), 1: (-1.0, 1.0), 2: (-1.0, -1.0), 3: (1.0, -1.0)}


class GateFollower:
    CAL_TIME = 0.3          # s of gyro averaging before flight
    CRUISE_PITCH = -0.10    # rad, nose down
    COMMIT_PX = 420.0       # beacon spread that means "gate is here"
    ALIGN = 0.08            # normalized image error considered centered
    COMMIT_SECONDS = 1.6
    LOST_FRAMES = 12
    MIN_ALTITUDE = 1.5      # m, ranger floor guard

    def __init__(self, session: ClientSession):
        self.session = session
        payload = session.config["payload"]
        self.mass = payload["mass"]
        self.gate_order = payload["gate_order"]
        cam = payload["config"]["camera"]
        self.focal = (cam["height"] / 2.0) / math.tan(math.radians(cam["vertical_fov"]) / 2.0)
        self.cx, self.cy = cam["width"] / 2.0, cam["height"] / 2.0

        self.q = [1.0, 0.0, 0.0, 0.0]
        self.t = 0.0
        self.passed = 0
        self.center = None
        self.prev_center = None
        self.scale = 0.0
        self.skew = 0.0
        self.misses = 0
        self.commit_until = -1.0
        self.range_value = None
        self.bias = [0.0, 0.0, 0.0]
        self._bias_sum = [0.0, 0.0, 0.0]
        self._bias_n = 0

        session.on("imu", self._on_imu)
        session.on("ir_beacons", self._on_beacons)
        session.on("range", self._on_range)
        session.on("gate_passed", self._on_gate)

    # -- sensing -------------------------------------------------------------

    def _on_imu(self, msg):
        dt = 1.0 / 240.0
        self.t += dt
        rate = msg["rate"]
        if self.t <= self.CAL_TIME:
            for axis in range(3):
                self._bias_sum[axis] += rate[axis]
            self._bias_n += 1
            self.bias = [s / self._bias_n for s in self._bias_sum]
        wx, wy, wz = (rate[a] - self.bias[a] for a in range(3))
        r, i, j, k = self.q
        q = [
            r + 0.5 * dt * (-i * wx - j * wy - k * wz),
            i + 0.5 * dt * (r * wx - k * wy + j * wz),
            j + 0.5 * dt * (k * wx + r * wy - i * wz),
            k + 0.5 * dt * (-j * wx + i * wy + r * wz),
        ]
        norm = math.sqrt(sum(c * c for c in q))
        self.q = [c / norm for c in q]
        self.session.send_rate_command(*self._control())

    def _on_range(self, msg):
        self.range_value = msg["value"]

    def _on_gate(self, msg):
        self.passed = msg["gates_passed"]

    def _on_beacons(self, msg):
        if self.passed >= len(self.gate_order):
            self.center = None
            return
        target = self.gate_order[self.passed]
        pts = {
            b["id"] % 10: (b["u"], b["v"])
            for b in msg["beacons"]
            if b["id"] // 10 == target
        }
        if len(pts) >= 2:
            us = [p[0] for p in pts.values()]
            vs = [p[1] for p in pts.values()]
            scale = max(max(us) - min(us), max(vs) - min(vs))
            mean_lat = sum(CORNER_SIGNS[c][0] for c in pts) / len(pts)
            mean_up = sum(CORNER_SIGNS[c][1] for c in pts) / len(pts)
            self.prev_center = self.center
            self.center = (
                sum(us) / len(us) + mean_lat * scale / 2.0,
                sum(vs) / len(vs) + mean_up * scale / 2.0,
            )
            self.scale = scale
            self.misses = 0
            if {0, 3} <= set(pts) and {1, 2} <= set(pts):
                h_left = abs(pts[0][1] - pts[3][1])
                h_right = abs(pts[1][1] - pts[2][1])
                self.skew = (h_left - h_right) / max(h_left, h_right, 1.0)
            else:
                self.skew = 0.0
            if scale > self.COMMIT_PX and abs(self._eu()) < self.ALIGN:
                self.commit_until = self.t + self.COMMIT_SECONDS
        else:
            # corners dropped out while the gate filled the view: fly through
            if self.scale > 260.0 and self.center is not None and abs(self._eu()) < 2 * self.ALIGN:
                self.commit_until = self.t + self.COMMIT_SECONDS
            self.misses += 1
            if self.misses > self.LOST_FRAMES:
                self.center = None
                self.prev_center = None
                self.scale = 0.0
                self.skew = 0.0

    def _eu(self):
        return (self.center[0] - self.cx) / self.focal if self.center else 0.0

    # -- control law -----------------------------------------------------------

    def _control(self):
        if self.t <= self.CAL_TIME:
            return (0.0, 0.0, 0.0), self.mass * GRAVITY
        r, i, j, k = self.q
        r20 = 2.0 * (i * k - j * r)
        r21 = 2.0 * (j * k + i * r)
        r22 = 1.0 - 2.0 * (i * i + j * j)
        pitch = math.asin(max(-1.0, min(1.0, r20)))
        roll = math.atan2(r21, r22)
        hover = self.mass * GRAVITY / max(r22, 0.5)
        low = self.range_value is not None and self.range_value < self.MIN_ALTITUDE
        boost = 1.25 if low else 1.0

        if self.t < self.commit_until:
            return (3.0 * (0.0 - roll), -3.0 * (-0.04 - pitch), 0.0), hover * boost

        if self.center is None:
            # hold-and-search: brake, keep altitude, scan
            return (3.0 * (0.0 - roll), -3.0 * (0.08 - pitch), 0.6), hover * boost

        u, v = self.center
        eu = (u - self.cx) / self.focal
        ev = (v - self.cy) / self.focal
        deu = dev = 0.0
        if self.prev_center is not None:
            deu = _clamp(((u - self.prev_center[0]) / self.focal) * 60.0, 3.0)
            dev = _clamp(((v - self.prev_center[1]) / self.focal) * 60.0, 3.0)

        pitch_des = self.CRUISE_PITCH
        if self.scale > 300.0 and abs(eu) > self.ALIGN:
            pitch_des = 0.05  # close but misaligned: brake and go around

        roll_des = _clamp(0.9 * eu + 0.35 * deu + 1.4 * self.skew, 0.35)
        rates = (
            3.0 * (roll_des - roll),
            -3.0 * (pitch_des - pitch),
            -1.6 * eu - 0.5 * deu,
        )
        thrust = self.mass * GRAVITY * (1.0 - 1.8 * (ev - pitch) - 0.55 * dev) / max(r22, 0.5)
        if low:
            thrust = max(thrust, hover * boost)
        return rates, min(max(thrust, 0.0), 4.0 * self.mass * GRAVITY)


def _clamp(value, bound):
    return max(-bound, min(bound, value))


def run_gate_follower(session: ClientSession, timeout: float = 300.0) -> dict | None:
    """Fly the session until race_end; returns the race_end message."""
    GateFollower(session)
    session.arm()
    result = session.wait_for("race_end", timeout=timeout)
    return result


def main() -> int:
    host = os.environ.get("RACEFORGE_HOST", "127.0.0.1")
    port = int(os.environ.get("RACEFORGE_PORT", "10253"))
    session = connect(host, port, timeout=30.0)
    result = run_gate_follower(session)
    if result is not None:
        print(
            "race_end: outcome=%s gates=%d score=%.3f"
            % (result["outcome"], result["gates_passed"], result["score"])
        )
    session.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
