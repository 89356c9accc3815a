"""Counter-based, splittable random streams.

Every stochastic routine takes an explicit ``numpy.random.Generator``; none
touch the global numpy state. Streams are Philox generators derived from a
``SeedSequence`` so that ensembles can hand each run an independent child
stream whose values do not depend on how many workers execute the runs.
"""

import numpy as np


def make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def spawn(seed, n):
    """Return ``n`` independent child generators of ``seed``."""
    if isinstance(seed, np.random.Generator):
        return seed.spawn(n)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return [np.random.Generator(np.random.Philox(s)) for s in seed.spawn(n)]
