"""Deterministic generator derivation.

Every stochastic component derives its generator from a master seed plus
integer tags naming the stream (experiment cell, chunk, ordering, ...),
so runs are reproducible and independent of execution order.
"""

from __future__ import annotations

import numpy as np


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(seed),) + tuple(int(k) for k in keys))
    )
