"""Named, seeded random streams.

Every source of randomness in the package draws from a stream addressed
by (root seed, name). Streams with different names are statistically
independent and reproducible across platforms, which is what makes whole
pipeline runs bit-identical for a fixed seed.
"""

from __future__ import annotations

import hashlib

import numpy as np


def named_stream(seed: int, name: str) -> np.random.Generator:
    """Return a Generator owned by `name` under the given root seed."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = (
        int.from_bytes(digest[0:4], "little"),
        int.from_bytes(digest[4:8], "little"),
    )
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=words))
