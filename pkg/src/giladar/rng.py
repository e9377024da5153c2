"""Counter-derived random substreams.

Measurement ``k`` of a campaign draws from a generator keyed by
``(master_seed, stream, k)``, so any measurement can be regenerated on its own
and the campaign can be produced in any order or split across workers.
"""

import numpy as np

from .errors import ConfigError

SPECKLE = 0
NOISE = 1

_MAX_SEED = 2**64


def check_seed(master_seed) -> int:
    seed = int(master_seed)
    if seed != master_seed or not 0 <= seed < _MAX_SEED:
        raise ConfigError(f"master seed must be an integer in [0, 2**64), got {master_seed!r}")
    return seed


def substream(master_seed: int, index: int, stream: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=check_seed(master_seed), spawn_key=(stream, int(index)))
    return np.random.Generator(np.random.Philox(seq))
