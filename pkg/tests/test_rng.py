"""Frozen test vectors for the random-number plumbing.

The streams are Philox4x32-10 keyed by SeedSequence(seed, spawn_key=(code,))
with the purpose codes of ``measureflow.rng.STREAM``. Any alternate
implementation reproducing these vectors reproduces every simulation.
"""

import numpy as np
import pytest

from measureflow.rng import STREAM, substream

VECTORS_SEED0_UNIFORM = {
    "initial": [0.7211967525405779, 0.026925274171797242, 0.4025382164530227],
    "brownian": [0.674438164022751, 0.4788968376798527, 0.30998762221501774],
    "jump_times": [0.9329842082654152, 0.4845214076217217, 0.6838308121893845],
    "marks": [0.9090137457364976, 0.8496085619333162, 0.24290112802077835],
}

VECTORS_SEED12345_NORMAL = {
    "brownian": [0.14118219023203812, -0.08408259829917067, 0.7164562841393114],
}


def test_stream_codes_frozen():
    assert STREAM == {
        "initial": 0,
        "brownian": 1,
        "jump_times": 2,
        "marks": 3,
        "mark_mc": 4,
        "directions": 5,
        "eta": 6,
    }


def test_uniform_vectors_seed_zero():
    for name, expected in VECTORS_SEED0_UNIFORM.items():
        got = substream(0, name).random(3)
        assert got.tolist() == expected


def test_normal_vectors():
    for name, expected in VECTORS_SEED12345_NORMAL.items():
        got = substream(12345, name).standard_normal(3)
        assert got.tolist() == expected


def test_streams_are_independent_generators():
    a = substream(7, "brownian").random(4)
    b = substream(7, "marks").random(4)
    assert not np.allclose(a, b)
    again = substream(7, "brownian").random(4)
    assert np.array_equal(a, again)


def test_unknown_purpose_rejected():
    with pytest.raises(ValueError):
        substream(0, "nonsense")
