"""Configuration generation: Metropolis chain and exact small-n sampler.

The target puts probability proportional to exp(H(x)) on x, with
H(x) = beta/2 * x'Ax + b * sum(x).  The Metropolis chain flips one
uniformly chosen spin per step and accepts with probability
min(1, exp(delta_H)); a flip of spin i changes H by
-2 * x_i * (beta * m_i + b), maintained in O(degree) time by keeping
the local-field vector up to date.  The exact sampler draws i.i.d.
configurations by inverse CDF over the enumerated state space and
serves as the oracle the chain is validated against.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import CapacityError, ParameterError
from .ising import (SpinConfiguration, _check_dims, _energy_of_spins,
                    enumerate_log_probs, index_to_spins)
from .rng import TAG_CHAIN, TAG_EXACT_SAMPLER, make_rng

_STEP_CHUNK = 1 << 20


@dataclass(frozen=True)
class MHConfig:
    """Chain length, seed, and optional fixed starting configuration.

    When no start is given the chain begins from uniform random spins
    drawn first from the seeded stream; site indices and acceptance
    uniforms follow, one of each per step, so a run is a pure function
    of (seed, iterations, initial).
    """

    iterations: int = 1_000_000
    seed: int = 0
    initial: Optional[SpinConfiguration] = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError(f"iterations must be >= 1, got {self.iterations}")


def energy(theta, a, x):
    """H(x) = beta/2 * x'Ax + b_field * sum(x)."""
    _check_dims(a, x)
    return _energy_of_spins(theta, a, x.as_float())


@njit(cache=True)
def _mh_kernel(spins, m, indptr, indices, data, beta, b, sites, us):
    # One proposal per entry of `sites`; us[t] is consumed by index, so
    # rejected proposals keep the stream aligned with the step count.
    for t in range(sites.shape[0]):
        i = sites[t]
        xi = spins[i]
        dh = -2.0 * xi * (beta * m[i] + b)
        if dh > 0.0 or us[t] < np.exp(dh):
            spins[i] = -xi
            delta = -2.0 * xi
            for k in range(indptr[i], indptr[i + 1]):
                m[indices[k]] += data[k] * delta


def mh_sample(theta, a, cfg):
    """Final state of a single Metropolis chain of cfg.iterations steps."""
    rng = make_rng(cfg.seed, TAG_CHAIN)
    if cfg.initial is None:
        spins = rng.integers(0, 2, size=a.n).astype(np.float64) * 2.0 - 1.0
    else:
        _check_dims(a, cfg.initial)
        spins = cfg.initial.as_float()
    m = np.bincount(a.row_ids, weights=a.data * spins[a.indices], minlength=a.n)
    done = 0
    while done < cfg.iterations:
        todo = min(_STEP_CHUNK, cfg.iterations - done)
        sites = rng.integers(0, a.n, size=todo, dtype=np.int64)
        us = rng.random(todo)
        _mh_kernel(spins, m, a.indptr, a.indices, a.data,
                   theta.beta, theta.b_field, sites, us)
        done += todo
    return SpinConfiguration(spins=spins.astype(np.int8))


def exact_sample(theta, a, n_draws, seed):
    """I.i.d. draws from the full model by inverse CDF over all 2^n
    states (n <= 20)."""
    if a.n > 20:
        raise CapacityError(f"exact sampling supports n <= 20, got n={a.n}")
    if n_draws < 1:
        raise ParameterError(f"n_draws must be >= 1, got {n_draws}")
    probs = np.exp(enumerate_log_probs(theta, a))
    cdf = np.cumsum(probs)
    rng = make_rng(seed, TAG_EXACT_SAMPLER)
    idx = np.searchsorted(cdf, rng.random(n_draws), side="right")
    idx = np.minimum(idx, probs.size - 1)
    rows = index_to_spins(idx, a.n)
    return [SpinConfiguration(spins=row) for row in rows]
