"""Counter-based random number streams.

Every stochastic consumer in the simulator draws from its own named Philox
stream keyed by (seed, stream id). Adding a consumer or reordering draws in
one stream can never shift the sample sequence observed by another, which is
what makes whole-episode replays bit-exact.
"""
from __future__ import annotations

import numpy as np

# Fixed stream ids. Never renumber: recorded runs depend on them.
STREAMS = {
    "vehicle-force": 1,
    "vehicle-moment": 2,
    "accel-bias": 3,
    "gyro-bias": 4,
    "accel-noise": 5,
    "gyro-noise": 6,
    "ranger": 7,
    "perturbation": 8,
}

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream, substream: int = 0) -> np.random.Generator:
    """Return the generator for (seed, stream[, substream]).

    `stream` is a name from STREAMS or a raw integer id. `substream` splits a
    stream further (e.g. one perturbation draw sequence per gate id).
    """
    if isinstance(stream, str):
        stream_id = STREAMS[stream]
    else:
        stream_id = int(stream)
    key = np.array(
        [int(seed) & _MASK64, ((stream_id << 32) ^ substream) & _MASK64],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
