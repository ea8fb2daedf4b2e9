"""Seed derivation.

Every random stream descends from the single run seed:
``SeedSequence(seed, spawn_key=(method_id, *keys))``. The spawn key makes
streams for different methods, targets and outer replications independent
and identical across machines.
"""

import numpy as np

METHOD_IDS = {"NV": 1, "IS": 2, "SIS": 3, "QNV": 4, "QLT": 5, "QIS": 6, "QSIS": 7}


def derive_seed(seed, *keys) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(int(k) for k in keys)
        )
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
