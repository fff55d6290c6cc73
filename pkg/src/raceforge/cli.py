"""Operator command line: run one episode, evaluate 25 courses, replay logs.

Exit codes: 0 success, 1 runtime failure (including replay mismatch),
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import os
import shlex
import subprocess
import sys
import time
from pathlib import Path

from .config import (
    ConfigError,
    SimConfig,
    apply_overrides,
    config_hash,
    config_to_dict,
    load_config,
)
from .controller import RateCommand
from .evaluation import evaluate
from .runlog import (
    RunLogError,
    read_record_json,
    read_run_log,
    recompute_race,
    write_record_json,
    write_run_log,
)
from .scene import load_course, perturb_course
from .service import open_listener, serve_episode
from .simulator import Simulator

log = logging.getLogger("raceforge")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _setup_logging():
    level = os.environ.get("RACEFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_cfg(args) -> SimConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    apply_overrides(cfg, args.set or [])
    return cfg


def _build_sim(cfg: SimConfig) -> Simulator:
    scene, start = load_course(cfg.course_path())
    scene = perturb_course(scene, cfg.seed, cfg.course.translation_sigma, cfg.course.yaw_sigma)
    return Simulator(cfg, scene=scene, start=start)


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    sim = _build_sim(cfg)
    out_dir = Path(args.out_dir)
    realtime = not args.as_fast_as_possible

    if args.listen or args.controller:
        listener = open_listener(cfg.service.port)
        port = listener.getsockname()[1]
        print(f"RACEFORGE LISTENING {port}", flush=True)
        proc = None
        if args.controller:
            env = dict(os.environ, RACEFORGE_HOST="127.0.0.1", RACEFORGE_PORT=str(port))
            proc = subprocess.Popen(shlex.split(args.controller), env=env)
        try:
            result = serve_episode(listener, sim, cfg, realtime=realtime)
        finally:
            listener.close()
            if proc is not None:
                proc.terminate()
                try:
                    proc.wait(timeout=10.0)
                except subprocess.TimeoutExpired:
                    proc.kill()
        outcome = result.outcome
    else:
        # headless: no client, zero-command episode starting immediately
        sim.apply_command(RateCommand())
        step_wall = cfg.dt
        next_deadline = time.monotonic()
        while sim.phase != "ended":
            sim.step()
            if realtime:
                next_deadline += step_wall / sim.clock.rate_scale
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
        outcome = sim.outcome or "ended"

    record = sim.record()
    meta = {"config_hash": config_hash(cfg), "config": config_to_dict(cfg), "seed": cfg.seed}
    write_run_log(out_dir / "run_log.csv", sim.rows, meta, timestamp=not args.no_timestamp)
    write_record_json(
        out_dir / "race_record.json", record, extras={"seed": cfg.seed, "outcome": outcome}
    )
    print(
        f"outcome={outcome} gates={record.gates_passed} elapsed={record.elapsed:.3f} "
        f"score={record.score:.3f}"
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    result = evaluate(
        cfg,
        args.controller,
        args.out_dir,
        realtime=not args.as_fast_as_possible,
        timestamp=not args.no_timestamp,
    )
    print("seeds: " + " ".join(str(s) for s in result.seeds))
    print("scores: " + " ".join(f"{s:.3f}" for s in result.per_course_scores))
    print(f"final_score={result.final_score:.3f}")
    return EXIT_OK


def _default_record_path(log_path: str) -> Path:
    log_path = Path(log_path)
    if log_path.name == "run_log.csv":
        return log_path.with_name("race_record.json")
    return log_path.with_name(log_path.stem + "_record.json")


def cmd_replay(args) -> int:
    meta, rows = read_run_log(args.log)
    record_path = Path(args.record) if args.record else _default_record_path(args.log)
    logged = read_record_json(record_path)

    from .config import config_from_dict

    cfg = config_from_dict(meta["config"])
    cfg.seed = meta["seed"]
    scene, _ = load_course(cfg.course_path())
    scene = perturb_course(scene, cfg.seed, cfg.course.translation_sigma, cfg.course.yaw_sigma)
    recomputed = recompute_race(rows, scene, cfg.vehicle.collider_radius, cfg.time_limit)

    mismatches = []
    for field in ("gates_passed", "collided", "finished", "score"):
        if getattr(recomputed, field) != logged.get(field):
            mismatches.append(
                f"{field}: log says {logged.get(field)!r}, replay computes "
                f"{getattr(recomputed, field)!r}"
            )
    if abs(recomputed.elapsed - logged.get("elapsed", 0.0)) > 1e-9:
        mismatches.append(
            f"elapsed: log says {logged.get('elapsed')}, replay computes {recomputed.elapsed}"
        )
    if mismatches:
        print("replay MISMATCH:")
        for m in mismatches:
            print("  " + m)
        return EXIT_RUNTIME
    print(
        f"replay OK: gates={recomputed.gates_passed} elapsed={recomputed.elapsed:.3f} "
        f"score={recomputed.score:.3f}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raceforge")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file path")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set service.port=0")
        p.add_argument("--as-fast-as-possible", action="store_true",
                       help="disable wall-clock pacing; implies lockstep sessions")
        p.add_argument("--no-timestamp", action="store_true",
                       help="suppress the timestamp header line in logs")
        p.add_argument("--out-dir", default=".", help="directory for output files")

    p_run = sub.add_parser("run", help="run a single episode")
    common(p_run)
    p_run.add_argument("--controller", default=None,
                       help="controller command line to launch as a subprocess")
    p_run.add_argument("--listen", action="store_true",
                       help="wait for an external controller to connect")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("evaluate", help="run the multi-course evaluation")
    common(p_eval)
    p_eval.add_argument("--controller", required=True,
                        help="controller command line, launched once per course")
    p_eval.set_defaults(func=cmd_evaluate)

    p_replay = sub.add_parser("replay", help="recompute race outcome from a run log")
    p_replay.add_argument("log", help="path to a run log CSV")
    p_replay.add_argument("--record", default=None, help="race record JSON to check against")
    p_replay.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RunLogError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as err:  # runtime failures get exit code 1
        log.exception("runtime failure")
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
