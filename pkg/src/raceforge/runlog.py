"""Per-step run logs (CSV) and race record sidecars (JSON).

Log layout: '#'-prefixed header lines (format tag, one JSON metadata line,
optional timestamp), then a CSV header and one row per physics step boundary.
Identical inputs produce byte-identical files when the timestamp line is
suppressed; floats are written in shortest round-trip form.
"""
from __future__ import annotations

import dataclasses
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .race import RaceRecord, RaceState, update_race

FORMAT_TAG = "# raceforge-runlog v1"

COLUMNS = (
    "sim_time,px,py,pz,vx,vy,vz,qr,qi,qj,qk,wx,wy,wz,m0,m1,m2,m3,events"
)


class RunLogError(ValueError):
    pass


def _event_token(ev) -> str:
    if isinstance(ev, tuple):
        return ev[0] if len(ev) == 1 else f"{ev[0]}:{ev[1]}"
    return str(ev)


def write_run_log(path, rows, meta: dict, timestamp: bool = True):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(FORMAT_TAG + "\n")
        f.write("# meta " + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
        if timestamp:
            f.write("# timestamp " + datetime.now(timezone.utc).isoformat() + "\n")
        f.write(COLUMNS + "\n")
        # json.dumps renders floats with the same shortest-roundtrip repr as
        # repr(), at C speed; strip the brackets to get the CSV columns
        for row in rows:
            s = row.state
            values = (
                [row.sim_time]
                + s.position.tolist()
                + s.velocity.tolist()
                + s.attitude.tolist()
                + s.body_rate.tolist()
                + s.motor_speeds.tolist()
            )
            numeric = json.dumps(values, separators=(",", ":"))[1:-1]
            events = ";".join(_event_token(e) for e in row.events)
            f.write(numeric + "," + events + "\n")


def read_run_log(path):
    """Parse a run log; returns (meta, rows) with rows (t, position, events)."""
    path = Path(path)
    if not path.exists():
        raise RunLogError(f"run log not found: {path}")
    meta = None
    rows = []
    with open(path) as f:
        first = f.readline().rstrip("\n")
        if first != FORMAT_TAG:
            raise RunLogError(f"not a raceforge run log: {path}")
        header_seen = False
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# meta "):
                meta = json.loads(line[len("# meta "):])
                continue
            if line.startswith("#"):
                continue
            if not header_seen:
                if line != COLUMNS:
                    raise RunLogError(f"unexpected CSV header at line {lineno}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 19:
                raise RunLogError(f"malformed row at line {lineno}")
            try:
                values = [float(x) for x in parts[:18]]
            except ValueError as err:
                raise RunLogError(f"non-numeric field at line {lineno}: {err}") from err
            events = [tok for tok in parts[18].split(";") if tok]
            rows.append((values[0], np.array(values[1:4]), events))
    if meta is None:
        raise RunLogError(f"missing metadata line in {path}")
    if not rows:
        raise RunLogError(f"run log has no data rows: {path}")
    return meta, rows


def write_record_json(path, record: RaceRecord, extras: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dataclasses.asdict(record)
    doc["version"] = __version__
    if extras:
        doc.update(extras)
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")


def read_record_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise RunLogError(f"race record not found: {path}")
    with open(path) as f:
        return json.load(f)


def recompute_race(rows, scene, collider_radius: float, time_limit: float) -> RaceRecord:
    """Re-run gate/collision/score logic over logged positions.

    Uses the same update_race machinery as the live simulator, so any edit to
    a logged trajectory that changes the race outcome is detected.
    """
    race = RaceState(scene=scene, collider_radius=collider_radius, time_limit=time_limit)
    prev = None
    for t, position, events in rows:
        if "race_start" in events and not race.started:
            race.start(t)
            prev = position
            continue
        if race.started and prev is not None and not race.ended:
            update_race(race, prev, position, t)
        prev = position
    final_time = rows[-1][0]
    return race.record(final_time)
