"""Seeded random substreams.

Every random draw in the package comes from a Philox counter-based
generator keyed by ``(master_seed, *key)``.  Distinct keys give
independent streams, so the result of a computation never depends on the
order in which closed-loops are scheduled.
"""

import numpy as np

# purpose tags used as the first element of a stream key
DATA = 0
SPLIT = 1
TRAIN = 2
MUTATE = 3
EXPLAIN = 4
EVAL = 5
INIT = 6


def substream(seed, *key):
    """Return a Philox-backed generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
