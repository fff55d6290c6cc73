"""Multi-course evaluation: N seeded perturbed courses, top-5 mean score.

Each course gets a fresh simulator seeded with the course seed, a perturbed
copy of the base course, and a freshly launched controller subprocess that
talks the wire protocol. A controller that crashes or disconnects scores zero
for that course and the outcome is recorded in the result file.
"""
from __future__ import annotations

import copy
import json
import logging
import os
import shlex
import subprocess
from pathlib import Path

from .config import SimConfig, config_hash
from .race import EvaluationResult
from .runlog import write_record_json, write_run_log
from .scene import load_course, perturb_course
from .service import open_listener, serve_episode
from .simulator import Simulator

log = logging.getLogger("raceforge.evaluation")


def run_course(
    cfg: SimConfig,
    seed: int,
    controller_cmd,
    realtime: bool = False,
):
    """One seeded course with a controller subprocess; returns a SessionResult."""
    course_cfg = copy.deepcopy(cfg)
    course_cfg.seed = int(seed)
    base_scene, start = load_course(course_cfg.course_path())
    scene = perturb_course(
        base_scene, seed, course_cfg.course.translation_sigma, course_cfg.course.yaw_sigma
    )
    sim = Simulator(course_cfg, scene=scene, start=start)

    listener = open_listener(course_cfg.service.port)
    port = listener.getsockname()[1]
    env = dict(os.environ, RACEFORGE_HOST="127.0.0.1", RACEFORGE_PORT=str(port))
    cmd = shlex.split(controller_cmd) if isinstance(controller_cmd, str) else list(controller_cmd)
    proc = subprocess.Popen(
        cmd, env=env, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL
    )
    try:
        result = serve_episode(listener, sim, course_cfg, realtime=realtime)
    finally:
        listener.close()
        proc.terminate()
        try:
            proc.wait(timeout=10.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
    return result


def evaluate(
    cfg: SimConfig,
    controller_cmd,
    out_dir,
    realtime: bool = False,
    timestamp: bool = True,
) -> EvaluationResult:
    """Run every configured course seed and write logs plus the result JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = list(cfg.evaluation.seeds)
    scores = []
    outcomes = []
    for i, seed in enumerate(seeds):
        result = run_course(cfg, seed, controller_cmd, realtime=realtime)
        record = result.record
        scores.append(record.score)
        outcomes.append(result.outcome)
        log.info(
            "course %d/%d seed=%d outcome=%s gates=%d score=%.3f",
            i + 1, len(seeds), seed, result.outcome, record.gates_passed, record.score,
        )
        meta = {
            "config_hash": config_hash(cfg),
            "config": _config_dict(cfg),
            "seed": int(seed),
            "course_index": i,
        }
        write_run_log(out_dir / f"course_{i:02d}.csv", result.sim.rows, meta, timestamp=timestamp)
        write_record_json(
            out_dir / f"course_{i:02d}_record.json",
            record,
            extras={"seed": int(seed), "outcome": result.outcome},
        )

    evaluation = EvaluationResult.from_scores(seeds, scores)
    doc = {
        "config_hash": config_hash(cfg),
        "seeds": list(evaluation.seeds),
        "per_course_scores": list(evaluation.per_course_scores),
        "outcomes": outcomes,
        "final_score": evaluation.final_score,
    }
    with open(out_dir / "evaluation_result.json", "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")
    return evaluation


def _config_dict(cfg: SimConfig) -> dict:
    from .config import config_to_dict

    return config_to_dict(cfg)
