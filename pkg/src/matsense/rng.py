"""Deterministic random-stream construction.

All randomness in the package flows through counter-based Philox generators
built from a master seed plus a path of labels, so any experiment cell or
trial can be reproduced in isolation and results do not depend on the order
in which trials run (or on how many threads run them).
"""

import hashlib

import numpy as np

# fold each path component into 64 bits; never use Python's salted hash()
_MASK64 = (1 << 64) - 1


def _component_key(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError("seed path components must be int or str, got %r" % (part,))


def seed_sequence(master_seed, *path):
    """Build a ``SeedSequence`` for ``master_seed`` and a label path.

    Parameters
    ----------
    master_seed : int
        Master seed of the run.
    *path : int or str
        Labels identifying the sub-stream, e.g. ``("phase", n, m, trial)``.
        Strings are folded to integers with sha256 so the mapping is stable
        across processes and platforms.

    Returns
    -------
    numpy.random.SeedSequence
    """
    key = tuple(_component_key(p) for p in path)
    return np.random.SeedSequence(int(master_seed) & _MASK64, spawn_key=key)


def make_rng(master_seed, *path):
    """Return a Philox ``Generator`` for ``master_seed`` and a label path."""
    return np.random.Generator(np.random.Philox(seed_sequence(master_seed, *path)))
