"""Priors, variational families, and the stochastic ELBO optimizer.

The target of inference is the pseudo-posterior over theta = (beta,
b_field) obtained by combining the pseudo-likelihood with a standard
log-normal prior on beta and a standard normal prior on b_field.  Both
variational families live on z = (log beta, b_field): the mean-field
family makes the coordinates independent normals, the bivariate-normal
family gives them a full covariance through a Cholesky factor.  Scale
parameters are kept positive by the softplus map of free reals.

Optimization is plain stochastic gradient ascent on the ELBO with the
score-function gradient estimator

    (1/S) * sum_s grad_nu log q(theta_s) * (log joint(theta_s) - log q(theta_s)),

a Robbins-Monro step size rho0 / (1 + t/tau), gradient clipping, and a
moving-average ELBO stopping rule.  Every random draw comes from a
stream keyed by (seed, purpose, iteration), so a fit is a pure function
of its inputs.
"""

import math
import time
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import expit

from .errors import ConvergenceError, DomainError, ParameterError
from .ising import LOG2, FieldStats, ModelParams, log_cosh, pseudo_log_lik
from .rng import (TAG_BBVI_GRADIENT, TAG_ELBO, TAG_FIT_EVAL, TAG_FIT_GRAD,
                  TAG_FIT_POINT, TAG_POINT_ESTIMATE, TAG_SAMPLE_Q, make_rng)

LOG_2PI = math.log(2.0 * math.pi)

_GRAD_CLIP = 10.0
_EVAL_EVERY = 10
_MA_WINDOW = 5


def softplus(x):
    """log(1 + e^x), overflow-free."""
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    """Inverse of softplus for y > 0."""
    if y <= 0:
        raise ParameterError(f"softplus is positive, got target {y}")
    return float(y + np.log1p(-np.exp(-y)))


_UNIT_SCALE_ETA = softplus_inv(1.0)


def _require_finite(obj, names):
    for name in names:
        v = float(getattr(obj, name))
        if not math.isfinite(v):
            raise ParameterError(f"{name} must be finite, got {v}")
        object.__setattr__(obj, name, v)


@dataclass(frozen=True)
class VariationalParamsMF:
    """Independent normals on (log beta, b_field): means mu1, mu2 and
    scales softplus(eta1), softplus(eta2)."""

    mu1: float
    mu2: float
    eta1: float
    eta2: float

    def __post_init__(self):
        _require_finite(self, ("mu1", "mu2", "eta1", "eta2"))

    @property
    def sigma1(self):
        return float(softplus(self.eta1))

    @property
    def sigma2(self):
        return float(softplus(self.eta2))

    def to_free(self):
        return np.array([self.mu1, self.mu2, self.eta1, self.eta2])

    @classmethod
    def from_free(cls, v):
        return cls(mu1=v[0], mu2=v[1], eta1=v[2], eta2=v[3])


@dataclass(frozen=True)
class VariationalParamsBN:
    """Joint normal on (log beta, b_field) with covariance L L', where
    L = [[softplus(l11_eta), 0], [l21, softplus(l22_eta)]]."""

    mu1: float
    mu2: float
    l11_eta: float
    l22_eta: float
    l21: float

    def __post_init__(self):
        _require_finite(self, ("mu1", "mu2", "l11_eta", "l22_eta", "l21"))

    def chol(self):
        return np.array([[float(softplus(self.l11_eta)), 0.0],
                         [self.l21, float(softplus(self.l22_eta))]])

    def covariance(self):
        l = self.chol()
        return l @ l.T

    def to_free(self):
        return np.array([self.mu1, self.mu2, self.l11_eta, self.l22_eta,
                         self.l21])

    @classmethod
    def from_free(cls, v):
        return cls(mu1=v[0], mu2=v[1], l11_eta=v[2], l22_eta=v[3], l21=v[4])


VariationalParams = Union[VariationalParamsMF, VariationalParamsBN]


def initial_params(family):
    """Neutral start matching the prior: zero means, unit scales."""
    if family == "mf":
        return VariationalParamsMF(0.0, 0.0, _UNIT_SCALE_ETA, _UNIT_SCALE_ETA)
    if family == "bn":
        return VariationalParamsBN(0.0, 0.0, _UNIT_SCALE_ETA, _UNIT_SCALE_ETA,
                                   0.0)
    raise ParameterError(f"unknown family {family!r}, want 'mf' or 'bn'")


@dataclass(frozen=True)
class BbviConfig:
    """Settings of one stochastic ELBO fit."""

    family: str = "mf"
    mc_samples: int = 200
    max_iters: int = 3000
    rho0: float = 0.05
    tau: float = 100.0
    patience: int = 50
    elbo_eval_samples: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("mf", "bn"):
            raise ParameterError(f"unknown family {self.family!r}")
        if self.mc_samples < 2 or self.elbo_eval_samples < 2:
            raise ParameterError("need at least 2 Monte Carlo samples")
        if self.rho0 <= 0 or self.tau <= 0:
            raise ParameterError("rho0 and tau must be positive")
        if self.max_iters < 1 or self.patience < 1:
            raise ParameterError("max_iters and patience must be >= 1")


@dataclass(frozen=True)
class FitResult:
    """Fitted variational parameters plus the optimization record.

    elbo_trace has one (estimate, standard error) row per iteration,
    computed from that iteration's gradient draws.
    """

    nu_star: VariationalParams
    elbo_trace: np.ndarray
    theta_hat: ModelParams
    iterations_run: int
    wall_time: float


# ---------------------------------------------------------------------------
# densities

def log_prior(theta):
    """Standard log-normal on beta plus standard normal on b_field."""
    if theta.beta <= 0:
        raise DomainError(f"prior requires beta > 0, got {theta.beta}")
    z1 = math.log(theta.beta)
    return -LOG_2PI - z1 - 0.5 * z1 * z1 - 0.5 * theta.b_field ** 2


def log_joint(theta, a, x):
    """pseudo_log_lik + log_prior; the unnormalized target of inference."""
    return pseudo_log_lik(theta, a, x) + log_prior(theta)


def _draw_z(nu, s, rng):
    eps = rng.standard_normal((s, 2))
    if isinstance(nu, VariationalParamsMF):
        scale = np.array([nu.sigma1, nu.sigma2])
        return np.array([nu.mu1, nu.mu2]) + eps * scale
    return np.array([nu.mu1, nu.mu2]) + eps @ nu.chol().T


def _scales(nu):
    """The two scale parameters (marginal for MF, Cholesky diagonal
    for BN); both must stay positive for the density to exist."""
    if isinstance(nu, VariationalParamsMF):
        return nu.sigma1, nu.sigma2
    l = nu.chol()
    return l[0, 0], l[1, 1]


def _log_q_z(nu, z):
    """Log density of z rows under the family (z-space, no Jacobian)."""
    if min(_scales(nu)) <= 0.0:
        raise ParameterError("variational scale underflowed to zero; the "
                             "free scale parameter is too negative")
    if isinstance(nu, VariationalParamsMF):
        s1, s2 = nu.sigma1, nu.sigma2
        d1 = (z[:, 0] - nu.mu1) / s1
        d2 = (z[:, 1] - nu.mu2) / s2
        return (-LOG_2PI - math.log(s1) - math.log(s2)
                - 0.5 * (d1 * d1 + d2 * d2))
    l = nu.chol()
    u1 = (z[:, 0] - nu.mu1) / l[0, 0]
    u2 = (z[:, 1] - nu.mu2 - l[1, 0] * u1) / l[1, 1]
    return (-LOG_2PI - math.log(l[0, 0]) - math.log(l[1, 1])
            - 0.5 * (u1 * u1 + u2 * u2))


def _grad_log_q_z(nu, z):
    """Gradient of log q in the free parameters, one row per z row.

    The b_field-to-theta Jacobian does not depend on the variational
    parameters, so this is also the gradient of the theta-space density.
    Columns follow to_free() ordering.
    """
    if isinstance(nu, VariationalParamsMF):
        s1, s2 = nu.sigma1, nu.sigma2
        d1 = z[:, 0] - nu.mu1
        d2 = z[:, 1] - nu.mu2
        g_mu1 = d1 / (s1 * s1)
        g_mu2 = d2 / (s2 * s2)
        g_eta1 = (d1 * d1 / s1 ** 3 - 1.0 / s1) * expit(nu.eta1)
        g_eta2 = (d2 * d2 / s2 ** 3 - 1.0 / s2) * expit(nu.eta2)
        return np.column_stack([g_mu1, g_mu2, g_eta1, g_eta2])
    l = nu.chol()
    l11, l21, l22 = l[0, 0], l[1, 0], l[1, 1]
    u1 = (z[:, 0] - nu.mu1) / l11
    u2 = (z[:, 1] - nu.mu2 - l21 * u1) / l22
    g_mu1 = u1 / l11 - u2 * l21 / (l11 * l22)
    g_mu2 = u2 / l22
    g_l11 = (u1 * u1 - 1.0) / l11 - u2 * l21 * u1 / (l11 * l22)
    g_l22 = (u2 * u2 - 1.0) / l22
    g_l21 = u1 * u2 / l22
    return np.column_stack([g_mu1, g_mu2, g_l11 * expit(nu.l11_eta),
                            g_l22 * expit(nu.l22_eta), g_l21])


def sample_q(nu, s, seed):
    """S parameter draws: beta = exp(z1), b_field = z2."""
    z = _draw_z(nu, int(s), make_rng(seed, TAG_SAMPLE_Q))
    return [ModelParams(beta=math.exp(z1), b_field=z2) for z1, z2 in z]


def log_q(nu, theta):
    """Variational log density in theta coordinates (includes the
    1/beta Jacobian of beta = exp(z1))."""
    if theta.beta <= 0:
        raise DomainError(f"log_q requires beta > 0, got {theta.beta}")
    z = np.array([[math.log(theta.beta), theta.b_field]])
    return float(_log_q_z(nu, z)[0] - z[0, 0])


def grad_log_q(nu, theta):
    """Gradient of log_q in the free variational parameters."""
    if theta.beta <= 0:
        raise DomainError(f"grad_log_q requires beta > 0, got {theta.beta}")
    z = np.array([[math.log(theta.beta), theta.b_field]])
    return _grad_log_q_z(nu, z)[0]


# ---------------------------------------------------------------------------
# stochastic ELBO machinery

def _pseudo_log_lik_many(stats, beta, b):
    """Objective at many (beta, b) pairs from compressed statistics."""
    arg = beta[:, None] * stats.m_values[None, :] + b[:, None]
    return (beta * stats.xm_sum + b * stats.x_sum
            - log_cosh(arg) @ stats.m_counts - stats.n * LOG2)


def _f_values(nu, stats, z):
    """log joint - log q at each z row, all in z coordinates."""
    z1, z2 = z[:, 0], z[:, 1]
    ll = _pseudo_log_lik_many(stats, np.exp(z1), z2)
    logprior = -LOG_2PI - z1 - 0.5 * z1 * z1 - 0.5 * z2 * z2
    logq = _log_q_z(nu, z) - z1
    return ll + logprior - logq


def _estimate_from_draws(nu, stats, s, rng):
    z = _draw_z(nu, s, rng)
    f = _f_values(nu, stats, z)
    grad = _grad_log_q_z(nu, z).T @ f / s
    return grad, float(f.mean()), float(f.std(ddof=1) / math.sqrt(s))


def bbvi_gradient(nu, a, x, s, seed):
    """Score-function Monte Carlo estimate of the ELBO gradient."""
    if s < 2:
        raise ParameterError(f"need s >= 2, got {s}")
    stats = FieldStats.from_instance(a, x)
    rng = make_rng(seed, TAG_BBVI_GRADIENT)
    grad, _, _ = _estimate_from_draws(nu, stats, int(s), rng)
    return grad


def elbo_estimate(nu, a, x, s, seed):
    """Monte Carlo ELBO estimate; returns (value, standard_error)."""
    if s < 2:
        raise ParameterError(f"need s >= 2, got {s}")
    stats = FieldStats.from_instance(a, x)
    z = _draw_z(nu, int(s), make_rng(seed, TAG_ELBO))
    f = _f_values(nu, stats, z)
    return float(f.mean()), float(f.std(ddof=1) / math.sqrt(int(s)))


def _mc_point_estimate(nu, s, rng):
    z = _draw_z(nu, s, rng)
    return ModelParams(beta=float(np.mean(np.exp(z[:, 0]))),
                       b_field=float(np.mean(z[:, 1])))


def point_estimate(nu_star, s, seed):
    """Posterior-mean estimate from S fresh draws of the fitted family."""
    return _mc_point_estimate(nu_star, int(s),
                              make_rng(seed, TAG_POINT_ESTIMATE))


def analytic_mean(nu):
    """Closed-form posterior mean: E beta = exp(mu1 + var(log beta)/2),
    E b_field = mu2."""
    if isinstance(nu, VariationalParamsMF):
        var1 = nu.sigma1 ** 2
    else:
        var1 = float(nu.chol()[0, 0] ** 2)
    return ModelParams(beta=math.exp(nu.mu1 + 0.5 * var1), b_field=nu.mu2)


def bbvi_fit(a, x, cfg):
    """Stochastic gradient ascent on the ELBO (see module docstring).

    Every 10 iterations the ELBO is re-estimated on a held-out stream;
    the fit stops once the 5-point moving average of those evaluations
    fails to improve `patience` times in a row, or at max_iters.
    """
    t_start = time.perf_counter()
    stats = FieldStats.from_instance(a, x)
    family_cls = (VariationalParamsMF if cfg.family == "mf"
                  else VariationalParamsBN)
    nu_vec = initial_params(cfg.family).to_free()
    trace = np.empty((cfg.max_iters, 2))
    evals = []
    best_ma = -np.inf
    stalled = 0
    iterations_run = cfg.max_iters
    for t in range(cfg.max_iters):
        nu = family_cls.from_free(nu_vec)
        if min(_scales(nu)) <= 0.0:
            raise ConvergenceError(
                f"variational scale underflowed at iteration {t}",
                last_iterate=nu)
        with np.errstate(over="ignore", invalid="ignore"):
            grad, elbo, elbo_se = _estimate_from_draws(
                nu, stats, cfg.mc_samples, make_rng(cfg.seed, TAG_FIT_GRAD, t))
        if not np.all(np.isfinite(grad)):
            raise ConvergenceError(
                f"non-finite ELBO gradient at iteration {t}", last_iterate=nu)
        trace[t] = (elbo, elbo_se)
        norm = float(np.linalg.norm(grad))
        if norm > _GRAD_CLIP:
            grad = grad * (_GRAD_CLIP / norm)
        nu_vec = nu_vec + (cfg.rho0 / (1.0 + t / cfg.tau)) * grad
        if not np.all(np.isfinite(nu_vec)):
            raise ConvergenceError(
                f"parameters diverged at iteration {t}", last_iterate=nu)
        if (t + 1) % _EVAL_EVERY == 0:
            nu_next = family_cls.from_free(nu_vec)
            if min(_scales(nu_next)) <= 0.0:
                raise ConvergenceError(
                    f"variational scale underflowed at iteration {t}",
                    last_iterate=nu)
            with np.errstate(over="ignore", invalid="ignore"):
                z = _draw_z(nu_next, cfg.elbo_eval_samples,
                            make_rng(cfg.seed, TAG_FIT_EVAL, len(evals)))
                evals.append(float(np.mean(_f_values(nu_next, stats, z))))
            ma = float(np.mean(evals[-_MA_WINDOW:]))
            if ma > best_ma:
                best_ma = ma
                stalled = 0
            else:
                stalled += 1
                if stalled >= cfg.patience:
                    iterations_run = t + 1
                    break
    nu_star = family_cls.from_free(nu_vec)
    theta_hat = _mc_point_estimate(nu_star, cfg.mc_samples,
                                   make_rng(cfg.seed, TAG_FIT_POINT))
    return FitResult(nu_star=nu_star, elbo_trace=trace[:iterations_run].copy(),
                     theta_hat=theta_hat, iterations_run=iterations_run,
                     wall_time=time.perf_counter() - t_start)


def kl_q_prior_analytic(nu):
    """Closed-form KL divergence from a mean-field variational
    distribution to the prior: the sum of two univariate normal KLs in
    (log beta, b_field) coordinates (the exp transform cancels)."""
    if not isinstance(nu, VariationalParamsMF):
        raise ParameterError("closed-form KL is defined for the mean-field "
                             "family only")
    v1, v2 = nu.sigma1 ** 2, nu.sigma2 ** 2
    return 0.5 * ((v1 + nu.mu1 ** 2 - 1.0 - math.log(v1))
                  + (v2 + nu.mu2 ** 2 - 1.0 - math.log(v2)))
