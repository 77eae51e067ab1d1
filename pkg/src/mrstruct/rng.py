"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, tag, *index)``, so a
path or a redraw can be regenerated in isolation and results do not depend
on the order or the number of workers that consume the streams.
"""
import numpy as np

SAMPLE = 1
PATH = 2
FAMILY = 3
GENERATE = 4
CHECK = 5


def stream(seed, tag, *index):
    """Return an independent generator for ``(seed, tag, *index)``."""
    entropy = [int(seed), int(tag), *(int(i) for i in index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
