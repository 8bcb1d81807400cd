"""Deterministic random-number plumbing.

All randomness flows from numpy's counter-based Philox4x32-10 bit generator.
A run is keyed by one 64-bit seed; independent substreams for each purpose are
derived as ``Philox(SeedSequence(seed, spawn_key=(code,)))`` with the fixed
purpose codes below. Draw schedules are arranged so that the number and order
of variates consumed never depends on thread or process counts, which makes
every experiment bit-reproducible and keeps common-random-number comparisons
exact across control policies.
"""

from __future__ import annotations

import numpy as np

__all__ = ["STREAM", "substream"]

# Purpose codes for substreams. Frozen: changing them changes every stream.
STREAM = {
    "initial": 0,       # initial particle cloud
    "brownian": 1,      # per-step Gaussian increments, shape (steps, N, d)
    "jump_times": 2,    # exponential inter-arrival clocks
    "marks": 3,         # jump marks, in global jump-time order
    "mark_mc": 4,       # fresh marks for generator-side resampling
    "directions": 5,    # perturbation directions / test direction fields
    "eta": 6,           # idiosyncratic singular-control schedules
}


def substream(seed: int, purpose: str) -> np.random.Generator:
    """Return the named Philox substream of a master seed."""
    try:
        code = STREAM[purpose]
    except KeyError:
        raise ValueError(f"unknown stream purpose {purpose!r}") from None
    ss = np.random.SeedSequence(int(seed), spawn_key=(code,))
    return np.random.Generator(np.random.Philox(ss))
