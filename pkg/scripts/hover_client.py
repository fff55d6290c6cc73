"""Scripted hover controller: holds zero body rates and weight-equal thrust.

Connects to the simulator named by RACEFORGE_HOST / RACEFORGE_PORT (or
--host/--port), arms, and answers every imu message with the same hover
command. Never navigates, so its race score is always zero; useful as a
protocol smoke test and as a deterministic baseline client.
"""
import argparse
import json
import os
import socket
import sys


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--host", default=os.environ.get("RACEFORGE_HOST", "127.0.0.1"))
    parser.add_argument("--port", type=int, default=int(os.environ.get("RACEFORGE_PORT", "10253")))
    args = parser.parse_args()

    sock = socket.create_connection((args.host, args.port), timeout=30.0)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    f = sock.makefile("rwb")

    def send(obj):
        f.write((json.dumps(obj) + "\n").encode())
        f.flush()

    send({"type": "arm"})
    thrust = 9.81
    reply = b'{"type": "rate_command", "body_rates": [0.0, 0.0, 0.0], "thrust": 9.81}\n'
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
            thrust = msg["payload"]["mass"] * 9.81
            reply = (json.dumps(
                {"type": "rate_command", "body_rates": [0.0, 0.0, 0.0], "thrust": thrust}
            ) + "\n").encode()
        elif mtype == "imu":
            f.write(reply)
            f.flush()
        elif mtype == "race_end":
            return 0


if __name__ == "__main__":
    sys.exit(main())
