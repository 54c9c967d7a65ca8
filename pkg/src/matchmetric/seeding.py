"""Named random substreams derived from a single root seed.

Every source of randomness in the package (parameter init, epoch
shuffles, dropout masks, synthetic data) pulls its generator from
``substream`` so that one integer seed reproduces a whole run bit for
bit, across processes and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(root_seed: int, *names: str) -> np.random.Generator:
    """Generator for the substream identified by ``names`` under ``root_seed``.

    The same (seed, names) always yields the same stream; distinct name
    paths yield statistically independent streams.
    """
    digest = hashlib.sha256("/".join(names).encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng([root_seed & _MASK64, *words])
