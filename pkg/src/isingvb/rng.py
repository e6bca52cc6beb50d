"""Deterministic random-stream derivation.

Every stochastic routine in the package builds its generator from an
explicit integer seed plus a fixed per-purpose tag, so that no two
routines given the same user seed ever share a stream.  Streams are
numpy PCG64 generators keyed by ``SeedSequence([seed, tag, *indices])``;
distinct key tuples give independent streams.

Tag registry (keep unique):

========  ==============================================
tag       purpose
========  ==============================================
0         random regular graph generation
1         Metropolis chain (init spins, sites, uniforms)
2         exact inverse-CDF sampler
10        ``sample_q`` draws
11        ``bbvi_gradient`` draws
12        ``elbo_estimate`` draws
13        ``point_estimate`` draws
20, t     fit: gradient draws at iteration t
21, k     fit: stopping-rule ELBO evaluation k
22        fit: final point-estimate draws
100, r    harness: chain seed for replication r
101, m,r  harness: fit seed for method m, replication r
========  ==============================================
"""

import numpy as np

TAG_GRAPH = 0
TAG_CHAIN = 1
TAG_EXACT_SAMPLER = 2
TAG_SAMPLE_Q = 10
TAG_BBVI_GRADIENT = 11
TAG_ELBO = 12
TAG_POINT_ESTIMATE = 13
TAG_FIT_GRAD = 20
TAG_FIT_EVAL = 21
TAG_FIT_POINT = 22
TAG_EXP_CHAIN = 100
TAG_EXP_FIT = 101


def make_rng(seed, *tags):
    """Generator keyed by (seed, *tags); same key, same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tags)]))


def derive_seed(seed, *tags):
    """A 64-bit child seed keyed by (seed, *tags), for handing to APIs
    that take a plain integer seed."""
    ss = np.random.SeedSequence([int(seed), *map(int, tags)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
