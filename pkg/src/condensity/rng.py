"""Counter-based random streams.

Each simulated path draws from its own Philox stream keyed by
``(base_seed, path_index, stream)``. A path's numbers therefore depend only on
its own index, so batches can be split, reordered or run concurrently without
changing any result.
"""

from __future__ import annotations

import numpy as np

# stream ids; keep stable, they are part of the reproducibility contract
TERMINAL = 0
NOISE = 1
BRIDGE = 2


def path_rng(seed: int, path_index: int = 0, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return path_rng(int(rng))
