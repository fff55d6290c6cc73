"""Race bookkeeping: ordered gate passes, scoring, multi-course aggregation.

Scoring: 10 points per gate passed in order minus elapsed seconds, zeroed on
collision or when the final gate is not reached inside the time limit. Gates
arm strictly sequentially; crossing a later gate forfeits the skipped ones
and moves the arming past the crossed gate.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .scene import Scene, check_collision, gate_pass_check


@dataclass(frozen=True)
class RaceRecord:
    gates_passed: int = 0
    elapsed: float = 0.0
    collided: bool = False
    finished: bool = False
    score: float = 0.0


@dataclass
class RaceState:
    """Mutable per-episode progress; `record()` summarizes it."""

    scene: Scene
    collider_radius: float
    time_limit: float = 120.0
    started: bool = False
    start_time: float = 0.0
    armed_index: int = 0
    gates_passed: int = 0
    collided: bool = False
    finished: bool = False
    ended: bool = False
    end_time: float = 0.0
    events: list = field(default_factory=list)

    def __post_init__(self):
        gates = self.scene.gates
        # plain-float plane data: the crossing prefilter runs every step
        self._planes = [
            (float(g.normal[0]), float(g.normal[1]), float(g.normal[2]),
             float(g.normal @ g.center))
            for g in gates
        ]

    def start(self, sim_time: float):
        self.started = True
        self.start_time = sim_time

    @property
    def armed_gate_id(self):
        gates = self.scene.gates
        return gates[self.armed_index].id if self.armed_index < len(gates) else None

    def elapsed(self, sim_time: float) -> float:
        base = self.end_time if self.ended else sim_time
        return max(base - self.start_time, 0.0) if self.started else 0.0

    def record(self, sim_time: float) -> RaceRecord:
        rec = RaceRecord(
            gates_passed=self.gates_passed,
            elapsed=self.elapsed(sim_time),
            collided=self.collided,
            finished=self.finished,
        )
        return dataclasses.replace(rec, score=compute_score(rec, self.time_limit))


def update_race(race: RaceState, prev_position, position, sim_time: float) -> list:
    """Advance race state for one physics step; returns emitted event tags.

    Must be called once per step while the episode runs. Collisions and the
    time limit apply from episode start; gate crossings only count once the
    race clock has started (first rate command). Events: ("gate", id),
    ("collision",), ("finished",), ("timeout",).
    """
    if race.ended:
        return []
    events = []
    gates = race.scene.gates

    contact = check_collision(position, race.collider_radius, race.scene)
    if contact is not None:
        race.collided = True
        race.ended = True
        race.end_time = sim_time
        events.append(("collision",))
        race.events.append((sim_time, "collision"))
        return events

    if not race.started:
        if sim_time >= race.time_limit:
            race.ended = True
            race.end_time = sim_time
            events.append(("timeout",))
            race.events.append((sim_time, "timeout"))
        return events

    # scalar plane-crossing prefilter over the still-armed gates
    px, py, pz = prev_position[0], prev_position[1], prev_position[2]
    cx, cy, cz = position[0], position[1], position[2]
    for j in range(race.armed_index, len(gates)):
        nx, ny, nz, offset = race._planes[j]
        s0 = nx * px + ny * py + nz * pz - offset
        if s0 >= 0.0:
            continue
        s1 = nx * cx + ny * cy + nz * cz - offset
        if s1 < 0.0:
            continue
        if gate_pass_check(prev_position, position, gates[j]):
            # skipped gates (armed..j-1) are forfeited, gate j is credited
            race.gates_passed += 1
            race.armed_index = j + 1
            events.append(("gate", gates[j].id))
            race.events.append((sim_time, f"gate:{gates[j].id}"))
            if j == len(gates) - 1:
                race.finished = True
                race.ended = True
                race.end_time = sim_time
                events.append(("finished",))
                race.events.append((sim_time, "finished"))
            break

    if not race.ended and race.elapsed(sim_time) >= race.time_limit:
        race.ended = True
        race.end_time = sim_time
        events.append(("timeout",))
        race.events.append((sim_time, "timeout"))
    return events


def compute_score(record: RaceRecord, time_limit: float) -> float:
    """10·gates − time, zero on collision or when the course is unfinished."""
    if record.collided or not record.finished or record.elapsed > time_limit:
        return 0.0
    return 10.0 * record.gates_passed - record.elapsed


@dataclass(frozen=True)
class EvaluationResult:
    seeds: tuple
    per_course_scores: tuple
    final_score: float

    @classmethod
    def from_scores(cls, seeds, scores) -> "EvaluationResult":
        return cls(
            seeds=tuple(int(s) for s in seeds),
            per_course_scores=tuple(float(s) for s in scores),
            final_score=final_score(scores),
        )


def final_score(scores, top_n: int = 5) -> float:
    """Mean of the `top_n` highest per-course scores."""
    if not len(scores):
        return 0.0
    best = sorted(scores, reverse=True)[:top_n]
    return float(sum(best)) / len(best)
