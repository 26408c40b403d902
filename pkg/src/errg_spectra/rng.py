"""Counter-based random streams.

Each row of an adjacency sample gets its own Philox stream keyed by
(seed, row): the draws for row i depend on nothing but the seed and i, so
rows can be generated in any order or in parallel with identical results.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def _check_seed(seed: int) -> None:
    if not 0 <= seed <= MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")


def row_generator(seed: int, row: int) -> np.random.Generator:
    _check_seed(seed)
    return np.random.Generator(np.random.Philox(key=seed | (row << 64)))


class RowStreams:
    """Reusable equivalent of ``row_generator``: ``streams.row(i)`` rewinds one Philox
    instance to counter 0 under key (seed, i), avoiding per-row construction cost."""

    def __init__(self, seed: int):
        _check_seed(seed)
        self.seed = seed
        self._bg = np.random.Philox(key=seed)
        self._gen = np.random.Generator(self._bg)

    def row(self, row: int) -> np.random.Generator:
        self._bg.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.zeros(4, np.uint64), "key": np.array([self.seed, row], np.uint64)},
            "buffer": np.zeros(4, np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen


def derive_seed(root_seed: int, *path: int) -> int:
    """64-bit child seed for e.g. (N, replicate); distinct paths give independent seeds."""
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
