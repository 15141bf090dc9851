"""Hierarchical seed derivation.

A master seed and a tuple of integer keys (model id, n, replication, ...)
are hashed by :class:`numpy.random.SeedSequence` into an independent
stream. Streams depend only on their own keys, so adding a model or
changing the number of workers never perturbs another stream.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

ENV_SEED = "WCI_SEED"
DEFAULT_SEED = 20240101


def master_seed(flag: int | None) -> int:
    """Command-line seed if given, else ``$WCI_SEED``, else the default."""
    if flag is not None:
        return int(flag)
    env = os.environ.get(ENV_SEED)
    if env:
        return int(env)
    return DEFAULT_SEED


def key_of(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def derive_rng(master: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)
