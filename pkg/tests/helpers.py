"""Shared oracles for the test suite.

Everything here is an independent re-derivation used to cross-check the
package: dense-matrix objective evaluations, finite differences, and a
noise-corrected total-variation distance.  None of it calls back into
the code paths it validates.
"""

import math

import numpy as np


def dense_local_fields(a, x):
    """Local fields via a dense matrix product."""
    return a.to_dense() @ x.as_float()


def dense_pseudo_log_lik(beta, b, a, x):
    """Pseudo-log-likelihood from the dense formula, written without the
    package's compressed statistics or log-cosh helper."""
    m = dense_local_fields(a, x)
    xf = x.as_float()
    arg = beta * m + b
    aa = np.abs(arg)
    log_cosh = aa + np.log1p(np.exp(-2.0 * aa)) - math.log(2.0)
    return float(beta * (xf @ m) + b * xf.sum()
                 - log_cosh.sum() - x.n * math.log(2.0))


def grid_pseudo_log_lik(betas, bs, a, x):
    """Objective on a (len(betas), len(bs)) grid, vectorized over b."""
    m = dense_local_fields(a, x)
    xf = x.as_float()
    xm = float(xf @ m)
    xs = float(xf.sum())
    n = x.n
    bs = np.asarray(bs, dtype=np.float64)
    out = np.empty((len(betas), bs.size))
    for i, beta in enumerate(betas):
        arg = beta * m[None, :] + bs[:, None]
        aa = np.abs(arg)
        lc = aa + np.log1p(np.exp(-2.0 * aa)) - math.log(2.0)
        out[i] = beta * xm + bs * xs - lc.sum(axis=1) - n * math.log(2.0)
    return out


def central_diff(f, t, h=1e-5):
    """Central finite-difference gradient of a scalar function of a
    2-vector."""
    t = np.asarray(t, dtype=np.float64)
    g = np.empty(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        g[k] = (f(t + e) - f(t - e)) / (2.0 * h)
    return g


def plug_in_tv(counts, probs):
    """Total variation between an empirical histogram and a distribution."""
    emp = counts / counts.sum()
    return 0.5 * float(np.abs(emp - probs).sum())


def debiased_tv(counts, probs, null_reps=20, null_seed=0):
    """Plug-in TV minus its expectation under perfect sampling.

    The plug-in estimator has a positive bias of order
    sum_s sqrt(p_s (1-p_s) / (2 pi N)), which at small N dominates any
    real discrepancy; subtracting the mean plug-in TV of matched-budget
    multinomial draws from the reference distribution leaves an estimate
    of the sampler's actual error.
    """
    n_draws = int(counts.sum())
    rng = np.random.default_rng(null_seed)
    null = [plug_in_tv(rng.multinomial(n_draws, probs).astype(np.float64),
                       probs)
            for _ in range(null_reps)]
    return plug_in_tv(counts, probs) - float(np.mean(null))
