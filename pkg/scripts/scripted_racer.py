"""Deterministic scripted client for batch-evaluation testing.

Open-loop schedule driven purely by received sim time: hover briefly, pitch
forward, cruise toward the first gates, then cut thrust and fall. Reacts only
to the message stream, so two runs against the same simulator seed produce
byte-identical sessions. Not a competitive racer.
"""
import json
import os
import socket
import sys

HOVER_UNTIL = 0.5
PITCH_UNTIL = 0.8
CRUISE_UNTIL = 3.5
PITCH_RATE = -0.9  # rad/s about body y: nose down, accelerate forward


def command_for(t: float, weight: float) -> dict:
    if t < HOVER_UNTIL:
        rates, thrust = [0.0, 0.0, 0.0], weight
    elif t < PITCH_UNTIL:
        rates, thrust = [0.0, PITCH_RATE, 0.0], 1.05 * weight
    elif t < CRUISE_UNTIL:
        rates, thrust = [0.0, 0.0, 0.0], 1.04 * weight
    else:
        rates, thrust = [0.0, 0.0, 0.0], 0.0
    return {"type": "rate_command", "body_rates": rates, "thrust": thrust}


def main():
    host = os.environ.get("RACEFORGE_HOST", "127.0.0.1")
    port = int(os.environ.get("RACEFORGE_PORT", "10253"))
    sock = socket.create_connection((host, port), timeout=30.0)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    f = sock.makefile("rwb")

    def send(obj):
        f.write((json.dumps(obj) + "\n").encode())
        f.flush()

    send({"type": "arm"})
    weight = 9.81
    while True:
        line = f.readline()
        if not line:
            return 0
        # hot path: only parse the lines this controller reacts to
        if not (line.startswith(b'{"type":"imu"') or line.startswith(b'{"type":"config"')
                or line.startswith(b'{"type":"race_end"')):
            continue
        msg = json.loads(line)
        mtype = msg.get("type")
        if mtype == "config":
            weight = msg["payload"]["mass"] * 9.81
        elif mtype == "imu":
            send(command_for(msg["sim_time"], weight))
        elif mtype == "race_end":
            return 0


if __name__ == "__main__":
    sys.exit(main())
