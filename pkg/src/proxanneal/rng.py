"""Reproducible random streams.

Every chain owns an independent counter-based stream: Philox4x64 keyed by
``(master_seed, chain_id)``.  Distinct keys give statistically independent
streams, and a stream is fully determined by its key, so any run is
bit-reproducible from ``(seed, chain_id)`` alone and replicas can run in any
order or in parallel.

Gaussian variates are ``Generator.standard_normal`` - numpy's ziggurat
transform applied deterministically to the Philox uniform bit stream.  The
numba and numpy kernel backends both consume this exact stream (asserted by
the regression tests), so results do not depend on the backend.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation

MAX_SEED = 2**64


def chain_stream(master_seed: int, chain_id: int = 0) -> np.random.Generator:
    """Independent generator for chain *chain_id* under *master_seed*."""
    if not (0 <= master_seed < MAX_SEED):
        raise ContractViolation("master seed must fit in an unsigned 64-bit integer")
    if not (0 <= chain_id < MAX_SEED):
        raise ContractViolation("chain id must fit in an unsigned 64-bit integer")
    key = np.array([master_seed, chain_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
