"""Seed-derived generator substreams.

All randomness in the library flows through :func:`substream`.  Distinct
``(seed, *path)`` tuples give statistically independent Philox streams, so
sample-parallel code can draw from per-index substreams and reproduce the
serial results exactly, regardless of worker count.
"""

from __future__ import annotations

import numpy as np

# Chunk length used when a logically serial stream is generated piecewise
# (e.g. mixture sampling).  Parallel producers must split on multiples of
# this to reproduce the serial output.
STREAM_CHUNK = 4096


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *path)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
