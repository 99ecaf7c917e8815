"""Counter-based seed derivation.

Every random stream in the package is keyed by a root seed plus a tuple of
task coordinates, so results never depend on execution order or on how many
workers run the tasks.
"""
import zlib

import numpy as np


def _key_part(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def derive_seed(root, *keys):
    """Return a 64-bit seed for the task identified by ``keys`` under ``root``."""
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(_key_part(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def derive_rng(root, *keys):
    return np.random.default_rng(derive_seed(root, *keys))


def tree_seeds(seed, n_trees):
    """Per-tree uint64 seeds; tree ``i`` depends only on ``(seed, i)``."""
    return np.random.SeedSequence(int(seed)).generate_state(n_trees, dtype=np.uint64)
