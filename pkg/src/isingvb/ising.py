"""Deterministic model quantities for the two-parameter spin model.

The model places probability proportional to
``exp(beta/2 * x' A x + b * sum(x))`` on configurations x in {-1,+1}^n,
with a known coupling matrix A.  Because the normalizing constant is
intractable for large n, estimation works with the pseudo-log-likelihood,
the sum of the log full-conditionals of each spin given the rest:

    sum_i [ beta*x_i*m_i + b*x_i - log cosh(beta*m_i + b) ] - n*log 2

where m_i = sum_j A(i,j) x_j are the local fields.  This module provides
the local fields, conditionals, the pseudo-log-likelihood with its first,
second and third derivative aggregates, the local-field spread statistic,
and an exact enumeration oracle for small n.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import CapacityError, ParameterError

LOG2 = math.log(2.0)
ENUMERATION_MAX_N = 22
_CHUNK = 1 << 16


def log_cosh(a):
    """log cosh(a), overflow-free: |a| + log1p(exp(-2|a|)) - log 2."""
    a = np.abs(a)
    return a + np.log1p(np.exp(-2.0 * a)) - LOG2


def sech_sq(a):
    """sech^2(a) = 4 t / (1+t)^2 with t = exp(-2|a|); underflows to 0."""
    t = np.exp(-2.0 * np.abs(a))
    return 4.0 * t / np.square(1.0 + t)


@dataclass(frozen=True)
class SpinConfiguration:
    """A vector of n spins, each exactly -1 or +1."""

    spins: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.spins)
        if arr.ndim != 1 or arr.size == 0:
            raise ParameterError("spins must be a nonempty 1-D vector")
        if not np.all(np.abs(arr.astype(np.float64)) == 1.0):
            raise ParameterError("every spin must be -1 or +1")
        arr = arr.astype(np.int8)
        arr.setflags(write=False)
        object.__setattr__(self, "spins", arr)

    @property
    def n(self):
        return int(self.spins.size)

    def as_float(self):
        return self.spins.astype(np.float64)


@dataclass(frozen=True)
class ModelParams:
    """Interaction strength beta (>= 0) and external field b_field."""

    beta: float
    b_field: float

    def __post_init__(self):
        beta = float(self.beta)
        b = float(self.b_field)
        if not (math.isfinite(beta) and math.isfinite(b)):
            raise ParameterError("parameters must be finite")
        if beta < 0:
            raise ParameterError(f"beta must be nonnegative, got {beta}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "b_field", b)

    def as_array(self):
        return np.array([self.beta, self.b_field])


@dataclass(frozen=True)
class ScoreVector:
    """Gradient of the pseudo-log-likelihood: w1 in beta, w2 in b."""

    w1: float
    w2: float

    def as_array(self):
        return np.array([self.w1, self.w2])


@dataclass(frozen=True)
class HessianMatrix:
    """Negative curvature matrix of the pseudo-log-likelihood (2x2,
    symmetric, positive semi-definite)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (2, 2):
            raise ParameterError("hessian must be 2x2")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.values)[0])


@dataclass(frozen=True)
class RemainderMatrices:
    """Third-derivative aggregates of the pseudo-log-likelihood.

    With h_i = tanh(beta*m_i + b) and g_i = h_i - h_i^3, r1 collects the
    beta-direction moments [[sum m^3 g, sum m^2 g], [sum m^2 g, sum m g]]
    and r2 the b-direction moments one m power lower.  The derivative of
    the curvature matrix in beta is -2*r1 and in b is -2*r2.
    """

    r1: np.ndarray
    r2: np.ndarray

    def __post_init__(self):
        for name in ("r1", "r2"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (2, 2):
                raise ParameterError(f"{name} must be 2x2")
            v.setflags(write=False)
            object.__setattr__(self, name, v)


def _check_dims(a, x):
    if x.n != a.n:
        raise ParameterError(f"spin vector length {x.n} != matrix dimension {a.n}")


def local_fields(a, x):
    """m_i = sum_j A(i,j) x_j for every vertex i."""
    _check_dims(a, x)
    xf = x.as_float()
    return np.bincount(a.row_ids, weights=a.data * xf[a.indices], minlength=a.n)


def conditional_prob_plus(theta, m_i):
    """P(spin = +1 | rest) = (1 + tanh(beta*m_i + b)) / 2.

    Accepts a scalar local field or a vector of them.
    """
    return 0.5 * (1.0 + np.tanh(theta.beta * np.asarray(m_i) + theta.b_field))


@dataclass(frozen=True)
class FieldStats:
    """Sufficient statistics of (A, x) for the pseudo-log-likelihood.

    Every term of the objective and its derivatives is either linear in
    (sum x_i*m_i, sum x_i) or a sum of a function of the local field
    over sites, so grouping equal local-field values (at most d+1 of
    them on a d-regular graph) makes repeated evaluation at many
    parameter values cheap.  All reductions are exact reorderings.
    """

    n: int
    xm_sum: float
    x_sum: float
    m_values: np.ndarray
    m_counts: np.ndarray

    @classmethod
    def from_instance(cls, a, x):
        m = local_fields(a, x)
        xf = x.as_float()
        values, counts = np.unique(m, return_counts=True)
        values.setflags(write=False)
        counts = counts.astype(np.float64)
        counts.setflags(write=False)
        return cls(n=x.n, xm_sum=float(xf @ m), x_sum=float(xf.sum()),
                   m_values=values, m_counts=counts)

    def pseudo_log_lik(self, beta, b):
        arg = beta * self.m_values + b
        return (beta * self.xm_sum + b * self.x_sum
                - float(self.m_counts @ log_cosh(arg)) - self.n * LOG2)

    def score(self, beta, b):
        th = np.tanh(beta * self.m_values + b)
        cth = self.m_counts * th
        return np.array([self.xm_sum - float(self.m_values @ cth),
                         self.x_sum - float(cth.sum())])

    def hessian(self, beta, b):
        s = self.m_counts * sech_sq(beta * self.m_values + b)
        ms = self.m_values * s
        h11 = float(self.m_values @ ms)
        h12 = float(ms.sum())
        return np.array([[h11, h12], [h12, float(s.sum())]])


def pseudo_log_lik(theta, a, x):
    """Sum of log conditional probabilities of each observed spin."""
    _check_dims(a, x)
    m = local_fields(a, x)
    xf = x.as_float()
    arg = theta.beta * m + theta.b_field
    return float(theta.beta * (xf @ m) + theta.b_field * xf.sum()
                 - log_cosh(arg).sum() - x.n * LOG2)


def score(theta, a, x):
    """Gradient of the pseudo-log-likelihood in (beta, b_field)."""
    _check_dims(a, x)
    m = local_fields(a, x)
    xf = x.as_float()
    resid = xf - np.tanh(theta.beta * m + theta.b_field)
    return ScoreVector(w1=float(m @ resid), w2=float(resid.sum()))


def hessian(theta, a, x):
    """Negative second-derivative matrix; entries are sech^2 moments of
    the local fields, so it is positive semi-definite by construction."""
    _check_dims(a, x)
    m = local_fields(a, x)
    s = sech_sq(theta.beta * m + theta.b_field)
    ms = m * s
    h11 = float(m @ ms)
    h12 = float(ms.sum())
    return HessianMatrix(values=np.array([[h11, h12], [h12, float(s.sum())]]))


def remainder_matrices(theta, a, x):
    """Third-derivative moment matrices r1 (beta direction) and r2 (b
    direction); see RemainderMatrices."""
    _check_dims(a, x)
    m = local_fields(a, x)
    h = np.tanh(theta.beta * m + theta.b_field)
    g = h - h ** 3
    mg = m * g
    m2g = m * mg
    m3g = m * m2g
    sums = [float(v.sum()) for v in (m3g, m2g, mg, g)]
    r1 = np.array([[sums[0], sums[1]], [sums[1], sums[2]]])
    r2 = np.array([[sums[1], sums[2]], [sums[2], sums[3]]])
    return RemainderMatrices(r1=r1, r2=r2)


def tn_statistic(a, x):
    """Population variance of the local fields, (1/n) sum (m_i - mean)^2.

    Controls the smallest eigenvalue of the curvature matrix: parameters
    are hard to identify when all local fields look alike.
    """
    m = local_fields(a, x)
    return float(np.mean(np.square(m - m.mean())))


def taylor_remainder(theta_tilde, a, x, delta):
    """Cubic Taylor remainder term evaluated at an intermediate point.

    For delta = theta - theta0 this is
    (d_beta * delta' r1 delta + d_b * delta' r2 delta) / 3, which equals
    one sixth of the third directional derivative, so
    pseudo_log_lik(theta0) + score.delta - delta'H delta/2 + remainder
    reproduces pseudo_log_lik(theta) up to fourth order in |delta| when
    the midpoint is used.
    """
    rem = remainder_matrices(theta_tilde, a, x)
    d = np.asarray(delta, dtype=np.float64)
    return float(d[0] * (d @ rem.r1 @ d) + d[1] * (d @ rem.r2 @ d)) / 3.0


# ---------------------------------------------------------------------------
# exact enumeration oracle (small n)

def _energy_of_spins(theta, a, xf):
    """beta/2 * x'Ax + b * sum(x) for a float spin vector."""
    pair = float(a.edge_weights @ (xf[a.edge_i] * xf[a.edge_j]))
    return theta.beta * pair + theta.b_field * float(xf.sum())


def index_to_spins(indices, n):
    """Decode state indices (bit i -> spin i; set bit = +1) into a
    (len(indices), n) array of -1/+1 values."""
    ks = np.asarray(indices, dtype=np.uint64).reshape(-1, 1)
    shifts = np.arange(n, dtype=np.uint64)
    return (((ks >> shifts) & np.uint64(1)).astype(np.int8) * 2 - 1)


def spins_to_index(x):
    """Inverse of index_to_spins for a single configuration."""
    bits = (x.spins > 0).astype(np.uint64)
    return int(bits @ (np.uint64(1) << np.arange(x.n, dtype=np.uint64)))


def _all_state_energies(theta, a):
    n = a.n
    out = np.empty(1 << n)
    ei, ej, w = a.edge_i, a.edge_j, a.edge_weights
    for lo in range(0, 1 << n, _CHUNK):
        hi = min(lo + _CHUNK, 1 << n)
        spins = index_to_spins(np.arange(lo, hi, dtype=np.uint64), n)
        xf = spins.astype(np.float64)
        e = theta.b_field * xf.sum(axis=1)
        for k in range(ei.size):
            e += (theta.beta * w[k]) * xf[:, ei[k]] * xf[:, ej[k]]
        out[lo:hi] = e
    return out


def log_partition(theta, a):
    """Log normalizing constant by exhaustive summation (n <= 22)."""
    if a.n > ENUMERATION_MAX_N:
        raise CapacityError(
            f"enumeration supports n <= {ENUMERATION_MAX_N}, got n={a.n}")
    return float(logsumexp(_all_state_energies(theta, a)))


def enumerate_log_probs(theta, a):
    """Log probability of every configuration, indexed by bit pattern
    (n <= 20)."""
    if a.n > 20:
        raise CapacityError(f"full distribution supports n <= 20, got n={a.n}")
    e = _all_state_energies(theta, a)
    return e - logsumexp(e)


def exact_log_lik(theta, a, x):
    """Log probability of x under the full model, via enumeration of the
    normalizing constant (n <= 22)."""
    _check_dims(a, x)
    return _energy_of_spins(theta, a, x.as_float()) - log_partition(theta, a)


# ---------------------------------------------------------------------------
# text serialization

def save_spins(x, path):
    """One line of space-separated -1/+1 values."""
    with open(path, "w") as fh:
        fh.write(" ".join(str(int(s)) for s in x.spins) + "\n")


def load_spins(path):
    with open(path) as fh:
        values = fh.read().split()
    if not values:
        raise ParameterError(f"{path}: no spin values found")
    return SpinConfiguration(spins=np.array([int(v) for v in values]))
