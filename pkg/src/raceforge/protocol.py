"""NDJSON wire protocol: one UTF-8 JSON object per line.

Schemas are documented with examples in docs/protocol.md. Every server
message carries `sim_time` and a per-type monotone `seq`; client messages
need neither (server sim time is authoritative). Floats survive the codec
bit-exactly because json round-trips shortest-repr doubles.
"""
from __future__ import annotations

import json
import math

PROTOCOL_VERSION = 1


class ProtocolError(ValueError):
    """Malformed or schema-violating message; `byte_offset` points at the fault."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _vec(n):
    def check(x):
        return isinstance(x, list) and len(x) == n and all(_is_num(e) for e in x)

    return check


def _num(x):
    return _is_num(x)


def _num_or_null(x):
    return x is None or _is_num(x)


def _integer(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _boolean(x):
    return isinstance(x, bool)


def _string(x):
    return isinstance(x, str)


def _beacon_list(x):
    if not isinstance(x, list):
        return False
    for b in x:
        if not isinstance(b, dict) or len(b) != 3:
            return False
        try:
            if not (_integer(b["id"]) and _is_num(b["u"]) and _is_num(b["v"])):
                return False
        except KeyError:
            return False
    return True


def _gate_list(x):
    return isinstance(x, list) and all(_integer(g) for g in x)


# required payload fields (beyond type/sim_time/seq) per message type
SERVER_SCHEMAS = {
    "hello": {"version": _integer, "session_id": _string},
    "config": {"payload": lambda x: isinstance(x, dict)},
    "imu": {"accel": _vec(3), "rate": _vec(3)},
    "range": {"value": _num_or_null},
    "ir_beacons": {"beacons": _beacon_list},
    "camera_pose": {"position": _vec(3), "attitude": _vec(4)},
    "collision": {},
    "gate_passed": {"gate_id": _integer, "gates_passed": _integer},
    "race_end": {
        "outcome": _string,
        "gates_passed": _integer,
        "elapsed": _num,
        "collided": _boolean,
        "finished": _boolean,
        "score": _num,
    },
    "state": {
        "position": _vec(3),
        "velocity": _vec(3),
        "attitude": _vec(4),
        "body_rate": _vec(3),
        "motor_speeds": _vec(4),
        "applied_motor_commands": _vec(4),
    },
    "protocol_error": {"error": _string},
}

CLIENT_SCHEMAS = {
    "arm": {},
    "tick": {},
    "rate_command": {"body_rates": _vec(3), "thrust": _num},
    "bye": {},
}

ALL_SCHEMAS = {**SERVER_SCHEMAS, **CLIENT_SCHEMAS}


def validate_message(msg: dict):
    if not isinstance(msg, dict):
        raise ProtocolError("message must be a JSON object")
    mtype = msg.get("type")
    if mtype not in ALL_SCHEMAS:
        raise ProtocolError(f"unknown message type {mtype!r}")
    if mtype in SERVER_SCHEMAS:
        if not _is_num(msg.get("sim_time", None)):
            raise ProtocolError(f"{mtype}: missing or non-finite sim_time")
        if not _integer(msg.get("seq", None)):
            raise ProtocolError(f"{mtype}: missing seq")
    for name, check in ALL_SCHEMAS[mtype].items():
        if name not in msg:
            raise ProtocolError(f"{mtype}: missing field {name!r}")
        if not check(msg[name]):
            raise ProtocolError(f"{mtype}: invalid value for field {name!r}")


def encode_message(msg: dict) -> bytes:
    """Serialize one message to a newline-terminated UTF-8 JSON line."""
    validate_message(msg)
    return (json.dumps(msg, separators=(",", ":"), allow_nan=False) + "\n").encode()


def decode_message(line) -> dict:
    """Parse and validate one protocol line (str or bytes, newline optional)."""
    if isinstance(line, bytes):
        try:
            line = line.decode()
        except UnicodeDecodeError as err:
            raise ProtocolError(f"invalid UTF-8: {err}", byte_offset=err.start) from err
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as err:
        raise ProtocolError(f"malformed JSON: {err.msg}", byte_offset=err.pos) from err
    validate_message(msg)
    return msg
