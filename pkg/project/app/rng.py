"""Named deterministic random streams.

Every concern (topology, generation, swaps, workload, synchronous slots) draws
from its own ``numpy.random.Generator`` spawned from the master seed, so the
stream one concern consumes never shifts another's.
"""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

STREAMS: Dict[str, int] = {
    "topology": 0,
    "generation": 1,
    "swaps": 2,
    "workload": 3,
    "synchronous": 4,
}


def _sequence(seed: int, name: str, key: Tuple[int, ...]) -> np.random.SeedSequence:
    try:
        index = STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown random stream {name!r}") from None
    return np.random.SeedSequence(entropy=seed, spawn_key=(index, *key))


class RandomStreams:
    """Seeded stream factory; ``key`` separates independent experiment cells."""

    def __init__(self, seed: int, key: Tuple[int, ...] = ()):
        self._seed = seed
        self._key = tuple(key)
        self._cache: Dict[str, np.random.Generator] = {}

    @property
    def seed(self) -> int:
        return self._seed

    def get(self, name: str) -> np.random.Generator:
        if name not in self._cache:
            self._cache[name] = np.random.default_rng(_sequence(self._seed, name, self._key))
        return self._cache[name]

    def seed_int(self, name: str) -> int:
        """Plain integer seed for APIs that take one (networkx generators)."""
        return int(_sequence(self._seed, name, self._key).generate_state(1)[0])

    def fork(self, *key: int) -> "RandomStreams":
        return RandomStreams(self._seed, self._key + tuple(key))
