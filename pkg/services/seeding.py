"""Named random sub-streams derived from one root seed."""
import hashlib

import numpy as np


def derive_seed(root: int, *names) -> int:
    """Hash a root seed and a path of names into a 63-bit seed.

    The result depends only on the arguments, never on call order, so every
    component draws from its own reproducible stream.
    """
    key = '/'.join([str(int(root))] + [str(n) for n in names])
    digest = hashlib.sha256(key.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big') & ((1 << 63) - 1)


def rng_for(root: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *names))
