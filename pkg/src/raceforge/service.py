"""TCP session server: streams sensors, accepts rate commands, runs episodes.

One session per connection, one vehicle per session. The physics loop is the
single writer of simulation state; a reader thread deposits inbound messages
into an inbox and a writer thread drains a bounded outbound queue (a full
queue ends the session rather than dropping sensor data).

Two pacing modes:
  realtime  — steps are paced to wall clock scaled by the dynamic rate scale.
  lockstep  — no pacing; after every `imu` message block the server waits for
              exactly one client line. Used by as-fast-as-possible batch
              evaluation, where it makes episodes bit-reproducible.
"""
from __future__ import annotations

import queue
import socket
import threading
import time
from dataclasses import dataclass

from . import __version__
from .clock import update_rate_scale
from .config import SimConfig, config_to_dict
from .controller import RateCommand
from .protocol import ProtocolError, decode_message, encode_message
from .quat import quat_from_rotmat
from .race import RaceRecord
from .simulator import Simulator

OUTBOUND_QUEUE_SIZE = 65536


@dataclass
class SessionResult:
    outcome: str
    record: RaceRecord
    sim: Simulator


class SessionError(RuntimeError):
    pass


class _Writer:
    """Outbound serializer with per-type sequence counters.

    Synchronous mode (lockstep sessions) buffers lines and writes them with
    one sendall per flush; threaded mode (realtime) hands batches to a writer
    thread through a bounded queue so the physics loop never blocks on a slow
    client — a full queue ends the session instead of dropping sensor data.
    """

    def __init__(self, conn: socket.socket, threaded: bool):
        self._seq: dict[str, int] = {}
        self._conn = conn
        self._buffer: list[bytes] = []
        self._failed = threading.Event()
        self._threaded = threaded
        if threaded:
            self._queue: queue.Queue = queue.Queue(maxsize=OUTBOUND_QUEUE_SIZE)
            self._thread = threading.Thread(target=self._drain, daemon=True)
            self._thread.start()

    def send(self, mtype: str, sim_time: float, **fields):
        seq = self._seq.get(mtype, 0)
        self._seq[mtype] = seq + 1
        msg = {"type": mtype, "sim_time": sim_time, "seq": seq, **fields}
        self._buffer.append(encode_message(msg))

    def flush(self):
        if not self._buffer:
            return
        data = b"".join(self._buffer)
        self._buffer.clear()
        if self._threaded:
            try:
                self._queue.put_nowait(data)
            except queue.Full:
                raise SessionError("outbound queue full (client too slow); ending session")
        else:
            try:
                self._conn.sendall(data)
            except OSError:
                self._failed.set()

    def _drain(self):
        while True:
            item = self._queue.get()
            if item is None:
                break
            try:
                self._conn.sendall(item)
            except OSError:
                self._failed.set()
                break

    def close(self):
        try:
            self.flush()
        except SessionError:
            pass
        if self._threaded:
            try:
                self._queue.put(None, timeout=1.0)
            except queue.Full:
                pass
            self._thread.join(timeout=5.0)

    @property
    def broken(self) -> bool:
        return self._failed.is_set()


class _Reader:
    """Inbound line reader; emits ("msg", dict) / ("error", str, offset) / ("eof",)."""

    def __init__(self, conn: socket.socket):
        self.inbox: queue.Queue = queue.Queue()
        self._file = conn.makefile("rb")
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self):
        offset = 0
        while True:
            try:
                line = self._file.readline()
            except OSError:
                line = b""
            if not line:
                self.inbox.put(("eof",))
                break
            if line.strip():
                try:
                    self.inbox.put(("msg", decode_message(line)))
                except ProtocolError as err:
                    at = offset + (err.byte_offset or 0)
                    self.inbox.put(("error", str(err), at))
            offset += len(line)


def _send_step_outputs(writer: _Writer, sim: Simulator, out, ground_truth: bool):
    """Publish order within a step: imu, range, camera_pose, ir_beacons, state."""
    t = out.sample_time
    if out.imu is not None:
        accel, rate = out.imu
        writer.send("imu", t, accel=accel.tolist(), rate=rate.tolist())
    if out.ranger_due:
        value = None if out.range_value is None else float(out.range_value)
        writer.send("range", t, value=value)
    if out.camera_pose is not None:
        pose = out.camera_pose
        writer.send(
            "camera_pose",
            t,
            position=pose.translation.tolist(),
            attitude=quat_from_rotmat(pose.rotation).tolist(),
        )
        writer.send(
            "ir_beacons",
            t,
            beacons=[{"id": b.beacon_id, "u": b.u, "v": b.v} for b in out.beacons],
        )
    if out.state_due and ground_truth:
        writer.send("state", t, **sim.state_snapshot())


def _send_events(writer: _Writer, sim: Simulator, events):
    t = sim.sim_time
    for ev in events:
        if ev[0] == "collision":
            writer.send("collision", t)
        elif ev[0] == "gate":
            writer.send("gate_passed", t, gate_id=int(ev[1]), gates_passed=sim.race.gates_passed)


def run_session(conn: socket.socket, sim: Simulator, cfg: SimConfig, realtime: bool = False) -> SessionResult:
    """Drive one episode over an accepted connection; returns its outcome.

    Lockstep sessions are fully synchronous and single-threaded (the physics
    loop reads the client's one line per imu frame directly); realtime
    sessions use the reader-thread/mailbox + writer-thread layout so pacing
    never blocks on the client.
    """
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    writer = _Writer(conn, threaded=realtime)
    try:
        writer.send("hello", 0.0, version=1, session_id=f"session-{cfg.seed}")
        writer.send(
            "config",
            0.0,
            payload={
                "config": config_to_dict(cfg),
                "gate_order": [g.id for g in sim.scene.gates],
                "mass": sim.params.mass,
                "hover_speed": sim.params.hover_speed(sim.world),
                "lockstep": not realtime,
                "version": __version__,
            },
        )
        writer.flush()
        if realtime:
            return _run_realtime(conn, writer, sim, cfg)
        return _run_lockstep(conn, writer, sim, cfg)
    except SessionError:
        return _finish(writer, sim, "backpressure")
    finally:
        writer.close()


def _run_lockstep(conn, writer, sim, cfg) -> SessionResult:
    conn.settimeout(cfg.service.recv_timeout)
    stream = conn.makefile("rb")
    offset = 0

    def read_line():
        nonlocal offset
        while True:
            try:
                line = stream.readline()
            except (socket.timeout, OSError):
                return None
            if not line:
                return None
            at = offset
            offset += len(line)
            if not line.strip():
                continue
            try:
                return decode_message(line)
            except ProtocolError as err:
                writer.send(
                    "protocol_error", sim.sim_time,
                    error=str(err), byte_offset=at + (err.byte_offset or 0),
                )
                writer.flush()
                return {"type": "tick"}  # the bad line still counts as the frame's line

    # wait for arm before streaming; pre-arm commands are ignored
    while True:
        msg = read_line()
        if msg is None:
            return _finish(writer, sim, "disconnected")
        if msg["type"] == "arm":
            break

    while sim.phase != "ended":
        out = sim.step()
        _send_step_outputs(writer, sim, out, cfg.service.ground_truth)
        _send_events(writer, sim, out.events)
        writer.flush()
        if writer.broken:
            return _finish(writer, sim, "disconnected")
        if out.imu is not None and sim.phase != "ended":
            msg = read_line()
            if msg is None:
                return _finish(writer, sim, "disconnected")
            cmd = _to_command(msg)
            if cmd is not None:
                sim.apply_command(cmd)
    return _finish(writer, sim, sim.outcome or "ended")


def _run_realtime(conn, writer, sim, cfg) -> SessionResult:
    reader = _Reader(conn)
    timeout = cfg.service.recv_timeout

    # wait for arm before streaming
    while True:
        item = _get_inbox(reader, timeout)
        if item is None or item[0] == "eof":
            return _finish(writer, sim, "disconnected")
        if item[0] == "error":
            _protocol_error(writer, sim, item)
            continue
        if item[1]["type"] == "arm":
            break

    next_deadline = time.monotonic()
    last_frame_wall = None
    nominal_frame = 1.0 / cfg.camera.rate
    pending_cmd = None

    while sim.phase != "ended":
        out = sim.step()
        _send_step_outputs(writer, sim, out, cfg.service.ground_truth)
        _send_events(writer, sim, out.events)
        writer.flush()
        if writer.broken:
            return _finish(writer, sim, "disconnected")

        drained = _drain_inbox(reader)
        if drained == "eof":
            return _finish(writer, sim, "disconnected")
        for item in drained:
            if item[0] == "error":
                _protocol_error(writer, sim, item)
            else:
                cmd = _to_command(item[1])
                if cmd is not None:
                    pending_cmd = cmd
        if pending_cmd is not None:
            sim.apply_command(pending_cmd)
            pending_cmd = None
        if out.camera_pose is not None:
            now = time.monotonic()
            if last_frame_wall is not None:
                sim.clock = update_rate_scale(
                    sim.clock, max(now - last_frame_wall, 1e-9), nominal_frame
                )
            last_frame_wall = now
        next_deadline += sim.clock.dt / sim.clock.rate_scale
        delay = next_deadline - time.monotonic()
        if delay > 0:
            time.sleep(delay)
    return _finish(writer, sim, sim.outcome or "ended")


def _to_command(msg: dict) -> RateCommand | None:
    if msg["type"] != "rate_command":
        return None
    try:
        return RateCommand(body_rate_cmd=msg["body_rates"], collective_thrust_cmd=msg["thrust"])
    except ValueError:
        return None


def _get_inbox(reader: _Reader, timeout: float):
    try:
        return reader.inbox.get(timeout=timeout)
    except queue.Empty:
        return None


def _drain_inbox(reader: _Reader):
    items = []
    while True:
        try:
            item = reader.inbox.get_nowait()
        except queue.Empty:
            return items
        if item[0] == "eof":
            return "eof"
        items.append(item)


def _protocol_error(writer: _Writer, sim: Simulator, item):
    try:
        writer.send("protocol_error", sim.sim_time, error=item[1], byte_offset=item[2])
        writer.flush()
    except SessionError:
        pass


def _finish(writer: _Writer, sim: Simulator, outcome: str) -> SessionResult:
    sim.end_episode(outcome)
    record = sim.record()
    try:
        writer.send(
            "race_end",
            sim.sim_time,
            outcome=outcome,
            gates_passed=record.gates_passed,
            elapsed=record.elapsed,
            collided=record.collided,
            finished=record.finished,
            score=record.score,
        )
    except SessionError:
        pass
    return SessionResult(outcome=outcome, record=record, sim=sim)


def open_listener(port: int) -> socket.socket:
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind(("127.0.0.1", port))
    listener.listen(1)
    return listener


def serve_episode(
    listener: socket.socket,
    sim: Simulator,
    cfg: SimConfig,
    realtime: bool = False,
    accept_timeout: float | None = None,
) -> SessionResult:
    """Accept one client on an open listener and run a full episode."""
    listener.settimeout(accept_timeout or cfg.service.recv_timeout)
    try:
        conn, _ = listener.accept()
    except socket.timeout:
        sim.end_episode("disconnected")
        return SessionResult(outcome="disconnected", record=sim.record(), sim=sim)
    with conn:
        return run_session(conn, sim, cfg, realtime=realtime)
