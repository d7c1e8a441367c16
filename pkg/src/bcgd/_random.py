"""Named, counter-based random streams derived from a single master seed.

Every consumer of randomness asks for a stream by name (``"data"``,
``"init"``, ``"shuffle"``, ``"mc"``), optionally indexed (e.g. by Monte
Carlo chunk). Streams are Philox generators keyed by a ``SeedSequence`` of
``(seed, stream id, *index)``, so a chunk's draws depend only on its index
and never on execution order.
"""

import numpy as np

STREAMS = {"data": 0, "init": 1, "shuffle": 2, "mc": 3, "sweep": 4}


def stream(seed, name, *index):
    try:
        sid = STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown random stream {name!r}; expected one of {sorted(STREAMS)}") from None
    entropy = [int(seed), sid, *(int(i) for i in index)]
    if any(e < 0 for e in entropy):
        raise ValueError("seed and stream indices must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
