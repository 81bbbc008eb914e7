"""Single-seed randomness.

Every random consumer draws from its own stream,
``SeedSequence(entropy=seed, spawn_key=(PURPOSES[purpose], *extra))``, so one
``--seed`` reproduces a whole run and adding a consumer never perturbs the
others. Per-series streams append the series index to ``extra``.
"""
import numpy as np

PURPOSES = {
    "generator": 0,
    "benchmark-sampling": 1,
    "undersample": 2,
    "mlp-init": 3,
    "mlp-shuffle": 4,
    "mlp-dropout": 5,
    "iforest": 6,
    "kmeans": 7,
    "verify": 8,
}


def sequence(seed: int, purpose: str, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(PURPOSES[purpose], *extra))


def generator(seed: int, purpose: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(sequence(seed, purpose, *extra))


def int_seed(seed: int, purpose: str, *extra: int) -> int:
    """A 31-bit integer seed for libraries that take ``random_state=int``."""
    return int(sequence(seed, purpose, *extra).generate_state(1)[0] & 0x7FFFFFFF)
