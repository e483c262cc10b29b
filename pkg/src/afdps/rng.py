"""Deterministic random-stream derivation.

One master seed drives a whole run. Every consumer derives its own
substream from the master seed plus a structural key (purpose string and
any number of integer indices), so draws never depend on execution order
and reruns are bit-identical.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_int(part) -> int:
    if isinstance(part, (bool,)):
        raise TypeError("bool is not a valid stream-key part")
    if isinstance(part, (int, np.integer)):
        value = int(part)
        if value < 0:
            raise ValueError(f"stream-key integers must be non-negative, got {value}")
        return value
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf8")).digest()
        return int.from_bytes(digest[:8], "big")
    raise TypeError(f"unsupported stream-key part: {part!r}")


def substream(master_seed: int, *key) -> np.random.Generator:
    """Return a Generator keyed by (master_seed, *key)."""
    entropy = (_key_int(master_seed),) + tuple(_key_int(p) for p in key)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(master_seed: int, *key) -> int:
    """Collapse (master_seed, *key) into a fresh non-negative master seed."""
    entropy = (_key_int(master_seed),) + tuple(_key_int(p) for p in key)
    state = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
    return int(state[0])
