import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from raceforge.race import (
    EvaluationResult,
    RaceRecord,
    RaceState,
    compute_score,
    final_score,
    update_race,
)
from raceforge.scene import Gate, Scene

DT = 1.0 / 960.0


def line_course(n_gates=11, spacing=10.0, width=4.0):
    gates = [
        Gate(
            id=i + 1,
            center=(spacing * (i + 1), 0.0, 0.0),
            normal=(1, 0, 0),
            up=(0, 0, 1),
            width=width,
            height=width,
        )
        for i in range(n_gates)
    ]
    return Scene(gates=gates)


def fly_through(race, xs, y=0.0, t0=0.0, dt=0.05):
    """Walk the race through a sequence of x positions on the y line."""
    events = []
    t = t0
    for i in range(len(xs) - 1):
        t += dt
        events += update_race(
            race, np.array([xs[i], y, 0.0]), np.array([xs[i + 1], y, 0.0]), t
        )
    return events


def test_nominal_run_passes_all_gates_in_order():
    scene = line_course()
    race = RaceState(scene=scene, collider_radius=0.2, time_limit=120.0)
    race.start(0.0)
    xs = np.arange(0.0, 115.0, 0.5)
    fly_through(race, xs)
    assert race.gates_passed == 11
    assert race.finished and race.ended and not race.collided
    record = race.record(race.end_time)
    assert record.score == pytest.approx(10.0 * 11 - record.elapsed)


def test_skipping_one_gate_forfeits_only_that_gate():
    scene = line_course()
    race = RaceState(scene=scene, collider_radius=0.2, time_limit=120.0)
    race.start(0.0)
    # dodge gate 3 (x=30) laterally, then rejoin the centerline
    t = 0.0
    pos = np.array([0.0, 0.0, 0.0])
    for x in np.arange(0.5, 115.0, 0.5):
        y = 5.0 if 25.0 < x < 35.0 else 0.0
        new = np.array([x, y, 0.0])
        t += 0.05
        update_race(race, pos, new, t)
        pos = new
    assert race.gates_passed == 10
    assert race.finished


def test_crossing_later_gate_advances_arming_past_it():
    scene = line_course(n_gates=5)
    race = RaceState(scene=scene, collider_radius=0.2, time_limit=120.0)
    race.start(0.0)
    # teleport-style dash that crosses gates 1..3 far off-axis, then gate 4 on-axis
    t = 0.0
    pos = np.array([0.0, 8.0, 0.0])
    for x in np.arange(0.5, 36.0, 0.5):
        new = np.array([x, 8.0, 0.0])
        t += 0.05
        update_race(race, pos, new, t)
        pos = new
    assert race.gates_passed == 0  # off-axis: nothing crossed
    update_race(race, np.array([39.0, 0.0, 0.0]), np.array([41.0, 0.0, 0.0]), t + 1)
    assert race.gates_passed == 1
    assert race.armed_index == 4  # gates 1..3 forfeited, gate 5 armed
    update_race(race, np.array([49.0, 0.0, 0.0]), np.array([51.0, 0.0, 0.0]), t + 2)
    assert race.finished and race.gates_passed == 2


def test_out_of_order_earlier_gate_is_ignored():
    scene = line_course(n_gates=3)
    race = RaceState(scene=scene, collider_radius=0.2, time_limit=120.0)
    race.start(0.0)
    update_race(race, np.array([19.0, 0, 0]), np.array([21.0, 0, 0]), 1.0)
    assert race.armed_index == 2
    # re-crossing gate 1 (already forfeited) does nothing
    update_race(race, np.array([9.0, 0, 0]), np.array([11.0, 0, 0]), 2.0)
    assert race.gates_passed == 1
    assert race.armed_index == 2


def test_collision_ends_episode_with_zero_score():
    scene = Scene(
        gates=line_course().gates, boxes=[((30.0, -1.0, -1.0), (31.0, 1.0, 1.0))]
    )
    race = RaceState(scene=scene, collider_radius=0.2, time_limit=120.0)
    race.start(0.0)
    events = fly_through(race, np.arange(0.0, 40.0, 0.25))
    assert race.collided and race.ended
    assert ("collision",) in events
    assert race.record(race.end_time).score == 0.0


def test_collision_before_race_start_still_ends_episode():
    scene = Scene(boxes=[((-1, -1, -5.0), (1, 1, -4.0))])
    race = RaceState(scene=scene, collider_radius=0.2, time_limit=120.0)
    update_race(race, np.array([0, 0, -3.0]), np.array([0, 0, -3.9]), 0.5)
    assert race.collided and race.ended and not race.started


def test_time_limit_expires_episode():
    scene = line_course()
    race = RaceState(scene=scene, collider_radius=0.2, time_limit=2.0)
    race.start(1.0)
    update_race(race, np.array([0, 0, 0]), np.array([0.01, 0, 0]), 2.9)
    assert not race.ended
    update_race(race, np.array([0.01, 0, 0]), np.array([0.02, 0, 0]), 3.0)
    assert race.ended and not race.finished
    assert race.record(3.0).score == 0.0


def test_gates_passed_never_decreases():
    scene = line_course(n_gates=4)
    race = RaceState(scene=scene, collider_radius=0.2, time_limit=120.0)
    race.start(0.0)
    counts = []
    t = 0.0
    pos = np.array([0.0, 0.0, 0.0])
    rng = np.random.default_rng(0)
    for _ in range(400):
        new = pos + rng.uniform([-0.2, -0.5, 0], [0.6, 0.5, 0])
        t += 0.05
        update_race(race, pos, new, t)
        counts.append(race.gates_passed)
        pos = new
        if race.ended:
            break
    assert all(b >= a for a, b in zip(counts, counts[1:]))


# -- scoring -----------------------------------------------------------------------

def test_score_formula_arithmetic():
    record = RaceRecord(gates_passed=11, elapsed=30.0, collided=False, finished=True)
    assert compute_score(record, 120.0) == 80.0


def test_collision_zeroes_score():
    record = RaceRecord(gates_passed=11, elapsed=20.0, collided=True, finished=True)
    assert compute_score(record, 120.0) == 0.0


def test_unfinished_zeroes_score():
    record = RaceRecord(gates_passed=10, elapsed=120.0, collided=False, finished=False)
    assert compute_score(record, 120.0) == 0.0


@given(
    st.integers(min_value=0, max_value=11),
    st.floats(min_value=0.0, max_value=119.0),
)
def test_score_monotone_in_gates_and_time(gates, elapsed):
    base = RaceRecord(gates_passed=gates, elapsed=elapsed, finished=True)
    more_gates = RaceRecord(gates_passed=gates + 1, elapsed=elapsed, finished=True)
    slower = RaceRecord(gates_passed=gates, elapsed=elapsed + 0.5, finished=True)
    assert compute_score(more_gates, 120.0) > compute_score(base, 120.0)
    assert compute_score(slower, 120.0) < compute_score(base, 120.0)


def test_final_score_all_equal():
    assert final_score([70.0] * 25) == 70.0


def test_final_score_top_five_mean():
    scores = [90.0, 80.0, 70.0, 60.0, 50.0] + [0.0] * 20
    assert final_score(scores) == 70.0


@given(st.lists(st.floats(min_value=0, max_value=120), min_size=25, max_size=25))
def test_final_score_matches_sort_oracle_and_permutation_invariant(scores):
    expected = sum(sorted(scores)[-5:]) / 5.0
    assert final_score(scores) == pytest.approx(expected)
    rng = np.random.default_rng(1)
    shuffled = list(rng.permutation(scores))
    assert final_score(shuffled) == pytest.approx(expected)


def test_evaluation_result_from_scores():
    result = EvaluationResult.from_scores(range(1, 26), [float(i) for i in range(25)])
    assert result.final_score == pytest.approx((24 + 23 + 22 + 21 + 20) / 5)
    assert len(result.seeds) == 25
