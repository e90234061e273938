"""Named random streams fanned out from one root seed.

Every command seeds exactly one root integer; each consumer asks for a
stream by name ("agent.init", "search.ordering", ...). Adding a new
consumer never perturbs the draws of existing ones, and the mapping is
stable across processes and platforms.
"""

import hashlib

import numpy as np


def stream_key(name: str) -> int:
    """Stable 64-bit key for a stream name."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def named_rng(root_seed: int, name: str) -> np.random.Generator:
    """Generator for stream `name`, derived from `root_seed`."""
    return np.random.default_rng(np.random.SeedSequence([root_seed, stream_key(name)]))
