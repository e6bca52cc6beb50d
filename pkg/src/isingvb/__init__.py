"""Bayesian estimation of two-parameter spin models from a single
observed configuration: pseudo-likelihood core, variational inference,
a maximum pseudo-likelihood baseline, samplers, and an experiment
harness."""

from .coupling import (AssumptionReport, CouplingMatrix, EdgeSet,
                       assumption_report, lattice4_adjacency, load_coupling,
                       random_regular_edges, save_coupling, scaled_adjacency)
from .errors import (CapacityError, ConvergenceError, DomainError,
                     GenerationError, ParameterError)
from .experiments import (ContractionConfig, ExperimentConfig, GraphSpec,
                          ImageGrid, MethodSpec, MseRow, ReconstructConfig,
                          load_pbm, reconstruct_image, run_contraction,
                          run_mse_experiment, run_reconstruct, save_pbm)
from .ising import (FieldStats, HessianMatrix, ModelParams, RemainderMatrices,
                    ScoreVector, SpinConfiguration, conditional_prob_plus,
                    exact_log_lik, hessian, load_spins, local_fields,
                    log_partition, pseudo_log_lik, remainder_matrices,
                    save_spins, score, tn_statistic)
from .pmle import PmleConfig, PmleResult, pmle_fit
from .sampler import MHConfig, energy, exact_sample, mh_sample
from .vb import (BbviConfig, FitResult, VariationalParamsBN,
                 VariationalParamsMF, analytic_mean, bbvi_fit, bbvi_gradient,
                 elbo_estimate, grad_log_q, kl_q_prior_analytic, log_joint,
                 log_prior, log_q, point_estimate, sample_q)

__version__ = "0.1.0"
