"""Counter-based splittable random streams.

Every stochastic routine takes an explicit numpy Generator.  Simulation
code derives independent substreams from a root seed and an integer path
(replicate index, purpose tag, ...) so that results do not depend on
execution order or parallelism.
"""

import numpy as np

# purpose tags for simulation substreams
GENERATE = 0
MISSINGNESS = 1
METHOD_BASE = 10


def substream(seed, *path):
    """Return an independent Generator for (seed, path).

    Uses Philox keyed through a SeedSequence spawn key, so streams for
    distinct paths are statistically independent and reproducible.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
