"""Connection handling, message decoding, and the latest-sample cache.

A background reader thread decodes newline-delimited JSON from the server,
updates a per-type latest-message cache, and invokes user callbacks in
arrival order. User code runs its own control loop and either polls the
cache or reacts inside callbacks; sends are plain writes with no
acknowledgment. All entry points are safe to call from one user thread.
"""
from __future__ import annotations

import json
import math
import socket
import threading

SERVER_MESSAGE_TYPES = {
    "hello",
    "config",
    "imu",
    "range",
    "ir_beacons",
    "camera_pose",
    "collision",
    "gate_passed",
    "race_end",
    "state",
    "protocol_error",
}


class ConnectionFailed(ConnectionError):
    pass


class HandshakeError(ConnectionError):
    pass


class SessionClosed(ConnectionError):
    pass


class ProtocolDecodeError(ValueError):
    pass


def decode_line(line) -> dict:
    """Decode one server protocol line into a message dict."""
    if isinstance(line, bytes):
        line = line.decode()
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as err:
        raise ProtocolDecodeError(f"malformed server line: {err.msg}") from err
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolDecodeError("server line is not a typed message object")
    mtype = msg["type"]
    if mtype not in SERVER_MESSAGE_TYPES:
        raise ProtocolDecodeError(f"unknown server message type {mtype!r}")
    if mtype != "hello" and mtype != "config":
        if "sim_time" not in msg or "seq" not in msg:
            raise ProtocolDecodeError(f"{mtype}: missing sim_time/seq")
    return msg


class ClientSession:
    """One live connection to a simulator session.

    `latest` maps message type to the newest message of that type; `on(type,
    fn)` registers a callback run on the reader thread in arrival order.
    """

    def __init__(self, sock: socket.socket, hello: dict, config: dict):
        self._sock = sock
        self._file = sock.makefile("rwb")
        self.hello = hello
        self.config = config
        self.latest: dict[str, dict] = {"hello": hello, "config": config}
        self._callbacks: dict[str, list] = {}
        self._lock = threading.Lock()
        self._new_message = threading.Condition(self._lock)
        self._closed = threading.Event()
        self.race_result: dict | None = None
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    # -- receiving -----------------------------------------------------------

    def _read_loop(self):
        while True:
            try:
                line = self._file.readline()
            except (OSError, ValueError):
                line = b""
            if not line:
                self._closed.set()
                with self._new_message:
                    self._new_message.notify_all()
                return
            if not line.strip():
                continue
            try:
                msg = decode_line(line)
            except ProtocolDecodeError:
                continue  # tolerate unknown/garbled lines from newer servers
            with self._new_message:
                self.latest[msg["type"]] = msg
                if msg["type"] == "race_end":
                    self.race_result = msg
                self._new_message.notify_all()
            for fn in self._callbacks.get(msg["type"], ()):
                fn(msg)

    def on(self, mtype: str, fn):
        self._callbacks.setdefault(mtype, []).append(fn)

    def wait_for(self, mtype: str, *, newer_than: int = -1, timeout: float = 30.0):
        """Block until a message of `mtype` with seq > newer_than arrives.

        Returns the message, or None when the session closes or times out.
        """
        deadline = timeout
        with self._new_message:
            while True:
                msg = self.latest.get(mtype)
                if msg is not None and msg.get("seq", 0) > newer_than:
                    return msg
                if self._closed.is_set():
                    return None
                if not self._new_message.wait(timeout=deadline):
                    return None

    @property
    def closed(self) -> bool:
        return self._closed.is_set()

    # -- sending -------------------------------------------------------------

    def _send(self, obj: dict):
        data = (json.dumps(obj, allow_nan=False) + "\n").encode()
        try:
            self._sock.sendall(data)
        except OSError as err:
            self._closed.set()
            raise SessionClosed(f"send failed: {err}") from err

    def arm(self):
        self._send({"type": "arm"})

    def tick(self):
        """Lockstep keep-alive: consume the frame without changing the command."""
        self._send({"type": "tick"})

    def send_rate_command(self, body_rates, collective_thrust: float):
        """Queue one rate command; validated locally, no acknowledgment."""
        rates = [float(r) for r in body_rates]
        thrust = float(collective_thrust)
        if len(rates) != 3 or not all(math.isfinite(r) for r in rates):
            raise ValueError("body_rates must be three finite numbers")
        if not math.isfinite(thrust) or thrust < 0.0:
            raise ValueError("collective thrust must be finite and >= 0")
        self._send({"type": "rate_command", "body_rates": rates, "thrust": thrust})

    def close(self):
        try:
            self._send({"type": "bye"})
        except SessionClosed:
            pass
        try:
            self._sock.close()
        except OSError:
            pass


def connect(host: str, port: int, timeout: float = 5.0) -> ClientSession:
    """Open a session: TCP connect, then the hello/config handshake."""
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as err:
        raise ConnectionFailed(f"cannot reach {host}:{port}: {err}") from err
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    sock.settimeout(timeout)
    f = sock.makefile("rb")
    try:
        hello = decode_line(f.readline())
        config = decode_line(f.readline())
        if hello["type"] != "hello" or config["type"] != "config":
            raise ProtocolDecodeError("handshake messages out of order")
    except (ProtocolDecodeError, OSError, socket.timeout) as err:
        sock.close()
        raise HandshakeError(f"handshake with {host}:{port} failed: {err}") from err
    sock.settimeout(None)
    return ClientSession(sock, hello, config)
