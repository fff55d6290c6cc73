import re
import subprocess
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]


class ServerProcess:
    """One `raceforge run --listen` subprocess bound to an ephemeral port."""

    def __init__(self, *overrides, fast=True, time_limit=20.0):
        cmd = [
            sys.executable, "-m", "raceforge.cli", "run", "--listen",
            "--no-timestamp", "--out-dir", "/tmp/raceforge-client-tests",
            "--set", "service.port=0",
            "--set", f"time_limit={time_limit}",
        ]
        if fast:
            cmd.append("--as-fast-as-possible")
        for item in overrides:
            cmd += ["--set", item]
        self.proc = subprocess.Popen(
            cmd, cwd=REPO_ROOT, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True
        )
        line = self.proc.stdout.readline()
        match = re.match(r"RACEFORGE LISTENING (\d+)", line)
        if not match:
            self.proc.kill()
            raise RuntimeError(f"server did not announce a port: {line!r}")
        self.port = int(match.group(1))

    def stop(self):
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


@pytest.fixture
def unperturbed_server():
    server = ServerProcess(
        "course.translation_sigma=0.0", "course.yaw_sigma=0.0", time_limit=20.0
    )
    yield server
    server.stop()


@pytest.fixture
def realtime_server():
    server = ServerProcess(fast=False, time_limit=6.0)
    yield server
    server.stop()
