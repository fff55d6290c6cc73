"""Unit quaternion attitude kinematics.

Quaternions are plain numpy arrays [q_r, q_i, q_j, q_k] (scalar first) and
always describe the body-to-world rotation. All functions are pure.
"""
from __future__ import annotations

import math

import numpy as np

UNIT_TOL = 1e-6

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_norm(q) -> float:
    return math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


def quat_normalize(q):
    n = quat_norm(q)
    if n == 0.0 or not math.isfinite(n):
        raise ValueError("cannot normalize zero or non-finite quaternion")
    return q / n


def quat_to_rotmat(q):
    """Body-to-world rotation matrix of a unit quaternion.

    Raises ValueError if the quaternion norm is off by more than UNIT_TOL;
    callers are expected to renormalize after every integration step.
    """
    n = quat_norm(q)
    if abs(n - 1.0) > UNIT_TOL:
        raise ValueError(f"quaternion norm {n} deviates from 1 beyond {UNIT_TOL}")
    r, i, j, k = q
    return np.array(
        [
            [1 - 2 * (j * j + k * k), 2 * (i * j - k * r), 2 * (i * k + j * r)],
            [2 * (i * j + k * r), 1 - 2 * (i * i + k * k), 2 * (j * k - i * r)],
            [2 * (i * k - j * r), 2 * (j * k + i * r), 1 - 2 * (i * i + j * j)],
        ]
    )


def quat_derivative(q, omega):
    """Quaternion rate for body angular rate `omega` (rad/s): 0.5 * q ∘ Ω."""
    r, i, j, k = q
    wx, wy, wz = omega
    return 0.5 * np.array(
        [
            -i * wx - j * wy - k * wz,
            r * wx - k * wy + j * wz,
            k * wx + r * wy - i * wz,
            -j * wx + i * wy + r * wz,
        ]
    )


def quat_multiply(a, b):
    ar, ai, aj, ak = a
    br, bi, bj, bk = b
    return np.array(
        [
            ar * br - ai * bi - aj * bj - ak * bk,
            ar * bi + ai * br + aj * bk - ak * bj,
            ar * bj - ai * bk + aj * br + ak * bi,
            ar * bk + ai * bj - aj * bi + ak * br,
        ]
    )


def quat_from_axis_angle(axis, angle: float):
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be non-zero")
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis / n))


def quat_from_yaw(yaw: float):
    """Rotation about world z by `yaw` radians."""
    return np.array([math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)])


def quat_from_rotmat(rot):
    """Unit quaternion of a proper rotation matrix (Shepperd's method)."""
    m = np.asarray(rot, dtype=float)
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = math.sqrt(trace + 1.0) * 2.0
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return quat_normalize(np.array(q))
