"""Hot inner loops, compiled per backend.

The membership check and the chain loop are defined once as plain Python
functions and wrapped either with ``numba.njit`` or with the identity,
depending on the backend.  Both flavours draw from the ``numpy`` Generator
with the same calls in the same order, so a chain run is bit-identical
across backends for a given stream.

Both sampling kernels share one shape: the forward move perturbs the state
by N(0, h I); the backward move rejection-samples the proposal
N(mean_factor * y, prop_var * I) until a draw lands in the body or the
trial threshold is exhausted.  The uniform target is ``mean_factor = 1,
prop_var = h``; the truncated-Gaussian target uses
``mean_factor = 1 / (1 + h / sigma2)`` and ``prop_var = h * mean_factor``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .backend import ACTIVE_BACKEND, jit_for


def _contains_source(kinds, bounds, params, x):
    d = x.shape[0]
    for t in range(kinds.shape[0]):
        kind = kinds[t]
        lo = bounds[t]
        hi = bounds[t + 1]
        if kind == 0:  # ball
            r = params[lo]
            s = 0.0
            for j in range(d):
                s += x[j] * x[j]
            if s > r * r:
                return False
        elif kind == 1:  # box
            for j in range(d):
                if x[j] < params[lo + j] or x[j] > params[lo + d + j]:
                    return False
        elif kind == 2:  # hpolytope rows
            nrows = (hi - lo) // (d + 1)
            for row in range(nrows):
                base = lo + row * (d + 1)
                s = 0.0
                for j in range(d):
                    s += params[base + j] * x[j]
                if s > params[base + d]:
                    return False
        else:  # axis-aligned ellipsoid
            s = 0.0
            for j in range(d):
                u = x[j] / params[lo + j]
                s += u * u
            if s > 1.0:
                return False
    return True


@dataclass(frozen=True)
class Kernels:
    backend: str
    contains: object
    backward: object
    chain: object


def _build(backend: str) -> Kernels:
    jit = jit_for(backend)
    contains = jit(_contains_source)

    def _backward_source(rng, y, mean_factor, prop_std, threshold, kinds, bounds, params, out):
        # Rejection loop; returns trial count, negated when the threshold
        # was exhausted without an accept.
        d = y.shape[0]
        trials = 0
        while trials < threshold:
            trials += 1
            for j in range(d):
                out[j] = mean_factor * y[j] + prop_std * rng.standard_normal()
            if contains(kinds, bounds, params, out):
                return trials
        return -trials

    backward = jit(_backward_source)

    def _chain_source(rng, x, h, mean_factor, prop_var, n_iters, threshold,
                      kinds, bounds, params, trials_out, record):
        # Returns (failed_iteration or -1, total trial count).
        d = x.shape[0]
        y = np.empty(d)
        prop = np.empty(d)
        step_std = math.sqrt(h)
        prop_std = math.sqrt(prop_var)
        total = 0
        for i in range(n_iters):
            for j in range(d):
                y[j] = x[j] + step_std * rng.standard_normal()
            t = backward(rng, y, mean_factor, prop_std, threshold,
                         kinds, bounds, params, prop)
            if t > 0:
                total += t
                if record:
                    trials_out[i] = t
                for j in range(d):
                    x[j] = prop[j]
            else:
                total += -t
                if record:
                    trials_out[i] = -t
                return i, total
        return -1, total

    chain = jit(_chain_source)
    return Kernels(backend=backend, contains=contains, backward=backward, chain=chain)


@lru_cache(maxsize=2)
def get_kernels(backend: str) -> Kernels:
    """Kernel set for *backend* ('numba' or 'numpy'); compiled lazily."""
    return _build(backend)


def active() -> Kernels:
    """Kernel set for the backend selected at import time."""
    return get_kernels(ACTIVE_BACKEND)
