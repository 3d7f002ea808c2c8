"""Reproducible random streams.

All stochastic code in the package draws from explicit `numpy.random.Generator`
instances backed by the counter-based Philox bit generator.  Independent
substreams are derived from a root seed plus an integer/string path, so results
never depend on execution order or worker count: stream identity is a pure
function of (seed, path).
"""

from __future__ import annotations

import hashlib

import numpy as np


def _path_component(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream path components must be non-negative, got {part}")
        return int(part)
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream path components must be int or str, got {type(part)!r}")


def substream(seed: int, *path) -> np.random.Generator:
    """Return an independent Generator for (seed, *path).

    The same arguments always yield a generator producing the same sequence;
    distinct paths yield statistically independent streams.
    """
    entropy = (int(seed),) + tuple(_path_component(p) for p in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def child_seed(seed: int, *path) -> int:
    """Derive a 63-bit integer seed for a nested component from (seed, *path)."""
    entropy = (int(seed),) + tuple(_path_component(p) for p in path)
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0]
    return int(state) & 0x7FFF_FFFF_FFFF_FFFF
