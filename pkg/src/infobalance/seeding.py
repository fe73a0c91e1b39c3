"""Counter-based random stream derivation.

Every stream is ``PCG64(SeedSequence(master_seed, spawn_key=(stream, *counters)))``.
The key is a pure function of what the stream is for (``stream``) and where it
sits in an experiment (e.g. ``(magnitude_index, trial_index)``), so the result
never depends on how many draws other streams made or on worker scheduling.
"""
from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1

# stream identifiers; never reuse a value for a different purpose
LATENT = 0
OBSERVATION_NOISE = 1
BOOTSTRAP = 2
SYNTHETIC_PAYOFF = 3
GENERATOR = 4


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(master_seed: int, kind: int, *counters: int) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(master_seed), spawn_key=(kind, *counters))
    return np.random.Generator(np.random.PCG64(ss))
