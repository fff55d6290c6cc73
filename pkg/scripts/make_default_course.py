"""Regenerate the bundled default course file.

Eleven 3x3 m gates on a counter-clockwise loop, ~240 m of track, first gate
straight ahead of the start pose. Run from the repository root:

    python scripts/make_default_course.py
"""
import json
import math
from pathlib import Path

START = (0.0, 0.0, 2.5)
START_YAW = 0.0

# gate centers along the loop (x, y, z)
CENTERS = [
    (12.0, 0.0, 2.5),
    (36.0, 0.0, 3.0),
    (58.0, 10.0, 3.5),
    (72.0, 27.0, 3.0),
    (74.0, 50.0, 2.5),
    (58.0, 62.0, 3.0),
    (34.0, 64.0, 3.5),
    (12.0, 58.0, 3.0),
    (-6.0, 44.0, 2.5),
    (-12.0, 20.0, 2.5),
    (-2.0, 2.0, 2.0),
]


def horizontal_direction(a, b):
    dx, dy = b[0] - a[0], b[1] - a[1]
    n = math.hypot(dx, dy)
    return (dx / n, dy / n, 0.0)


def main():
    gates = []
    prev = START
    length = 0.0
    for i, center in enumerate(CENTERS):
        normal = horizontal_direction(prev, center)
        length += math.dist(prev, center)
        gates.append(
            {
                "id": i + 1,
                "center": list(center),
                "normal": [round(c, 6) for c in normal],
                "up": [0.0, 0.0, 1.0],
                "width": 3.0,
                "height": 3.0,
                "frame_thickness": 0.15,
            }
        )
        prev = center

    doc = {
        "format_version": 1,
        "name": "default-loop",
        "path_length_m": round(length, 1),
        "start": {"position": list(START), "yaw": START_YAW},
        "gates": gates,
        "static_beacons": [
            {"id": 901, "position": [20.0, -12.0, 4.0]},
            {"id": 902, "position": [50.0, 30.0, 6.0]},
        ],
        "boxes": [
            {"min": [-40.0, -40.0, -1.0], "max": [110.0, 100.0, 0.0]},  # floor
            {"min": [24.0, 30.0, 0.0], "max": [27.0, 33.0, 7.0]},       # pillar
            {"min": [46.0, 40.0, 0.0], "max": [50.0, 44.0, 5.0]},       # crate stack
        ],
        "triangles": [],
    }

    out = Path(__file__).resolve().parents[1] / "src" / "raceforge" / "courses" / "default_course.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    print(f"wrote {out} (path length {length:.1f} m)")


if __name__ == "__main__":
    main()
