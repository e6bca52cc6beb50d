"""Reproducible experiment harness.

Three pipelines, all driven by JSON configs and writing plain-text
outputs:

* bench: the squared-error protocol.  Per replication, draw one
  configuration from the true model with a Metropolis chain, fit every
  configured method on that same configuration, and report
  MSE = mean over replications of (beta_hat - beta0)^2 + (b_hat - b0)^2
  per method, with a jackknife standard error.
* contraction: for a grid of n values, fit the variational family on
  fresh draws and report how much posterior mass sits outside balls
  around the true parameters and the mean posterior distance, which
  should shrink as n grows.
* reconstruct: treat a binary image as spins on a 4-nearest-neighbour
  lattice, estimate (beta, b_field), then regenerate an image from the
  fitted parameters.

Every random stream is derived from the config's master seed plus fixed
tags (replication index, method index), so outputs are byte-identical
across runs; wall-clock timings are kept in memory and written only on
request, to a separate file outside that guarantee.
"""

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coupling import lattice4_adjacency, random_regular_edges, scaled_adjacency
from .errors import ConvergenceError, ParameterError
from .ising import ModelParams, SpinConfiguration
from .pmle import PmleConfig, pmle_fit
from .rng import TAG_EXP_CHAIN, TAG_EXP_FIT, derive_seed
from .sampler import MHConfig, mh_sample
from .vb import (BbviConfig, VariationalParamsMF, analytic_mean, bbvi_fit,
                 sample_q)

DESK_REPLICATIONS = 50
DESK_CHAIN_ITERS = 200_000
PAPER_REPLICATIONS = 100
PAPER_CHAIN_ITERS = 1_000_000

_TAG_GRAPH_PER_CELL = 300
_TAG_DIST_DRAWS = 301
_TAG_SOURCE_IMAGE = 400
_TAG_IMAGE_FIT = 401
_TAG_IMAGE_REGEN = 402

_CONTRACTION_RADII = (0.1, 0.2, 0.4)


@dataclass(frozen=True)
class GraphSpec:
    """Either a random regular graph (kind='regular', n, d) or a
    4-nearest-neighbour lattice (kind='lattice', rows, cols)."""

    kind: str
    n: int = 0
    d: int = 0
    rows: int = 0
    cols: int = 0

    def __post_init__(self):
        if self.kind not in ("regular", "lattice"):
            raise ParameterError(f"unknown graph kind {self.kind!r}")

    @property
    def vertex_count(self):
        return self.n if self.kind == "regular" else self.rows * self.cols

    @property
    def degree_label(self):
        # 0 marks a lattice, whose degree varies at the boundary
        return self.d if self.kind == "regular" else 0

    def build(self, seed):
        if self.kind == "regular":
            return scaled_adjacency(random_regular_edges(self.n, self.d, seed))
        return lattice4_adjacency(self.rows, self.cols)


@dataclass(frozen=True)
class MethodSpec:
    """A fitting method: 'pmle', or 'mf'/'bn' with a Monte Carlo size."""

    name: str
    mc_samples: int = 200

    def __post_init__(self):
        if self.name not in ("pmle", "mf", "bn"):
            raise ParameterError(f"unknown method {self.name!r}")

    @property
    def family(self):
        return self.name if self.name in ("mf", "bn") else ""


@dataclass
class ExperimentConfig:
    """One benchmark cell: graph, truth, budget, methods, master seed."""

    graph: GraphSpec
    theta0: ModelParams
    methods: tuple
    replications: int = DESK_REPLICATIONS
    sampler_iterations: int = DESK_CHAIN_ITERS
    master_seed: int = 0
    bbvi_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replications < 1:
            raise ParameterError("replications must be >= 1")
        if not self.methods:
            raise ParameterError("at least one method is required")


@dataclass
class MseRow:
    """One method's aggregate over the replications of a cell."""

    method: str
    family: str
    s: int
    n: int
    d: int
    beta0: float
    b0: float
    replications: int
    failures: int
    mse: float
    se_mse: float
    mean_beta_hat: float
    mean_b_hat: float
    wall_time_total: float


@dataclass(frozen=True)
class ImageGrid:
    """Binary image as -1 (white) / +1 (black) pixels."""

    rows: int
    cols: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ParameterError("image dimensions must be >= 2")
        px = np.asarray(self.pixels)
        if px.shape != (self.rows, self.cols):
            raise ParameterError("pixel array shape does not match rows x cols")
        if not np.all(np.abs(px.astype(np.float64)) == 1.0):
            raise ParameterError("pixels must be -1 or +1")
        px = px.astype(np.int8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    def to_spins(self):
        return SpinConfiguration(spins=self.pixels.ravel())

    @classmethod
    def from_spins(cls, x, rows, cols):
        return cls(rows=rows, cols=cols,
                   pixels=x.spins.reshape(rows, cols))

    def mean_pixel(self):
        return float(self.pixels.astype(np.float64).mean())


# ---------------------------------------------------------------------------
# bench

def _bbvi_config(method, options, seed):
    return BbviConfig(family=method.name, mc_samples=method.mc_samples,
                      seed=seed, **options)


def _fit_one(method, a, x, options, seed):
    """(beta_hat, b_hat) or None on a fit failure."""
    try:
        if method.name == "pmle":
            est = pmle_fit(a, x, PmleConfig()).params
        else:
            est = bbvi_fit(a, x, _bbvi_config(method, options, seed)).theta_hat
    except ConvergenceError:
        return None
    return est.beta, est.b_field


def _bench_replication(task):
    """One replication of one cell: sample x, fit every method on it."""
    a, cfg, r = task
    x = mh_sample(cfg.theta0, a,
                  MHConfig(iterations=cfg.sampler_iterations,
                           seed=derive_seed(cfg.master_seed, TAG_EXP_CHAIN, r)))
    out = []
    for m_idx, method in enumerate(cfg.methods):
        t0 = time.perf_counter()
        est = _fit_one(method, a, x, cfg.bbvi_options,
                       derive_seed(cfg.master_seed, TAG_EXP_FIT, m_idx, r))
        out.append((m_idx, est, time.perf_counter() - t0))
    return r, out


def _map_tasks(fn, tasks, workers):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def run_mse_experiment(cfg, workers=1):
    """All replications of one cell; one MseRow per method, in the
    order the methods were configured."""
    a = cfg.graph.build(cfg.master_seed)
    results = _map_tasks(_bench_replication,
                         [(a, cfg, r) for r in range(cfg.replications)],
                         workers)
    results.sort(key=lambda item: item[0])
    rows = []
    for m_idx, method in enumerate(cfg.methods):
        sq_errs, beta_hats, b_hats = [], [], []
        failures = 0
        wall = 0.0
        for _, per_method in results:
            _, est, dt = per_method[m_idx]
            wall += dt
            if est is None:
                failures += 1
                continue
            beta_hat, b_hat = est
            sq_errs.append((beta_hat - cfg.theta0.beta) ** 2
                           + (b_hat - cfg.theta0.b_field) ** 2)
            beta_hats.append(beta_hat)
            b_hats.append(b_hat)
        k = len(sq_errs)
        mse = float(np.mean(sq_errs)) if k else math.nan
        se = float(np.std(sq_errs, ddof=1) / math.sqrt(k)) if k > 1 else math.nan
        rows.append(MseRow(
            method=method.name, family=method.family,
            s=method.mc_samples if method.family else 0,
            n=cfg.graph.vertex_count, d=cfg.graph.degree_label,
            beta0=cfg.theta0.beta, b0=cfg.theta0.b_field,
            replications=cfg.replications, failures=failures,
            mse=mse, se_mse=se,
            mean_beta_hat=float(np.mean(beta_hats)) if k else math.nan,
            mean_b_hat=float(np.mean(b_hats)) if k else math.nan,
            wall_time_total=wall))
    return rows


_MSE_CSV_COLUMNS = ("method", "family", "S", "n", "d", "beta0", "b0",
                    "replications", "failures", "mse", "se_mse",
                    "mean_beta_hat", "mean_b_hat")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_mse_csv(rows, path):
    """Timing-free, byte-deterministic summary of bench rows."""
    _write_csv(path, _MSE_CSV_COLUMNS,
               [(r.method, r.family, r.s, r.n, r.d, float(r.beta0),
                 float(r.b0), r.replications, r.failures, float(r.mse),
                 float(r.se_mse), float(r.mean_beta_hat), float(r.mean_b_hat))
                for r in rows])


def write_timings_csv(rows, path):
    """Wall-clock sidecar; excluded from the determinism guarantee."""
    _write_csv(path, ("method", "family", "S", "n", "d", "wall_time_total"),
               [(r.method, r.family, r.s, r.n, r.d, float(r.wall_time_total))
                for r in rows])


def write_elbo_trace_csv(trace, path):
    """Per-iteration ELBO estimates as iter,elbo,elbo_se."""
    _write_csv(path, ("iter", "elbo", "elbo_se"),
               [(t, float(row[0]), float(row[1]))
                for t, row in enumerate(trace)])


def run_bench(cells, out_dir, workers=1, timings_path=None):
    """Run every cell and write mse.csv under out_dir."""
    rows = []
    for cell in cells:
        rows.extend(run_mse_experiment(cell, workers=workers))
    os.makedirs(out_dir, exist_ok=True)
    write_mse_csv(rows, os.path.join(out_dir, "mse.csv"))
    if timings_path:
        write_timings_csv(rows, timings_path)
    return rows


# ---------------------------------------------------------------------------
# contraction

@dataclass
class ContractionConfig:
    """Posterior-shrinkage diagnostic across sample sizes."""

    n_values: tuple
    d: int
    theta0: ModelParams
    family: str = "mf"
    mc_samples: int = 200
    replications: int = 30
    sampler_iterations: int = DESK_CHAIN_ITERS
    dist_samples: int = 2000
    master_seed: int = 0
    bbvi_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.n_values) < 2:
            raise ParameterError("need at least two n values to compare")


def _contraction_replication(task):
    ccfg, a, n_idx, r = task
    x = mh_sample(ccfg.theta0, a,
                  MHConfig(iterations=ccfg.sampler_iterations,
                           seed=derive_seed(ccfg.master_seed, TAG_EXP_CHAIN,
                                            n_idx, r)))
    method = MethodSpec(name=ccfg.family, mc_samples=ccfg.mc_samples)
    try:
        fit = bbvi_fit(a, x, _bbvi_config(
            method, ccfg.bbvi_options,
            derive_seed(ccfg.master_seed, TAG_EXP_FIT, n_idx, r)))
    except ConvergenceError:
        return n_idx, r, None
    draws = sample_q(fit.nu_star, ccfg.dist_samples,
                     derive_seed(ccfg.master_seed, _TAG_DIST_DRAWS, n_idx, r))
    t0 = ccfg.theta0.as_array()
    dists = np.array([float(np.linalg.norm(p.as_array() - t0))
                      for p in draws])
    out_mass = tuple(float(np.mean(dists > rad)) for rad in _CONTRACTION_RADII)
    return n_idx, r, (float(dists.mean()), out_mass)


def run_contraction(ccfg, out_dir, workers=1):
    """Mean posterior distance and tail masses per n; returns the table
    rows and writes contraction.csv."""
    tasks = []
    graphs = {}
    for n_idx, n in enumerate(ccfg.n_values):
        spec = GraphSpec(kind="regular", n=int(n), d=ccfg.d)
        graphs[n_idx] = spec.build(
            derive_seed(ccfg.master_seed, _TAG_GRAPH_PER_CELL, n_idx))
        tasks.extend((ccfg, graphs[n_idx], n_idx, r)
                     for r in range(ccfg.replications))
    results = _map_tasks(_contraction_replication, tasks, workers)
    table = []
    for n_idx, n in enumerate(ccfg.n_values):
        per_rep = [res for idx, _, res in sorted(
            (t for t in results if t[0] == n_idx), key=lambda t: t[1])]
        ok = [r for r in per_rep if r is not None]
        failures = len(per_rep) - len(ok)
        means = np.array([r[0] for r in ok])
        masses = np.array([r[1] for r in ok])
        table.append({
            "n": int(n), "d": ccfg.d, "beta0": ccfg.theta0.beta,
            "b0": ccfg.theta0.b_field, "family": ccfg.family,
            "S": ccfg.mc_samples, "replications": ccfg.replications,
            "failures": failures,
            "mean_dist": float(means.mean()) if len(ok) else math.nan,
            "se_mean_dist": (float(np.std(means, ddof=1)
                                   / math.sqrt(len(ok)))
                             if len(ok) > 1 else math.nan),
            "mass_out": (tuple(float(v) for v in masses.mean(axis=0))
                         if len(ok) else (math.nan,) * 3),
        })
    os.makedirs(out_dir, exist_ok=True)
    header = ("n", "d", "beta0", "b0", "family", "S", "replications",
              "failures", "mean_dist", "se_mean_dist",
              "mass_out_0.1", "mass_out_0.2", "mass_out_0.4")
    _write_csv(os.path.join(out_dir, "contraction.csv"), header,
               [(row["n"], row["d"], float(row["beta0"]), float(row["b0"]),
                 row["family"], row["S"], row["replications"],
                 row["failures"], float(row["mean_dist"]),
                 float(row["se_mean_dist"]), *map(float, row["mass_out"]))
                for row in table])
    return table


# ---------------------------------------------------------------------------
# result serialization

def _nu_dict(nu):
    if isinstance(nu, VariationalParamsMF):
        return {"mu1": nu.mu1, "mu2": nu.mu2, "eta1": nu.eta1,
                "eta2": nu.eta2, "sigma1": nu.sigma1, "sigma2": nu.sigma2}
    cov = nu.covariance()
    return {"mu1": nu.mu1, "mu2": nu.mu2, "l11_eta": nu.l11_eta,
            "l22_eta": nu.l22_eta, "l21": nu.l21,
            "sigma11": float(cov[0, 0]), "sigma22": float(cov[1, 1]),
            "sigma12": float(cov[0, 1])}


def fit_result_dict(fit, family):
    """JSON-ready view of a fit; timing is deliberately left out so the
    file is identical across reruns."""
    analytic = analytic_mean(fit.nu_star)
    return {
        "family": family,
        "nu_star": _nu_dict(fit.nu_star),
        "theta_hat": {"beta": fit.theta_hat.beta,
                      "b": fit.theta_hat.b_field},
        "theta_hat_analytic": {"beta": analytic.beta,
                               "b": analytic.b_field},
        "iterations_run": fit.iterations_run,
    }


# ---------------------------------------------------------------------------
# image reconstruction

def save_pbm(img, path):
    """Plain-text PBM (P1); bit 1 is black and maps to +1."""
    bits = (img.pixels > 0).astype(np.int8)
    with open(path, "w") as fh:
        fh.write(f"P1\n{img.cols} {img.rows}\n")
        for row in bits:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def load_pbm(path):
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise ParameterError(f"{path}: not a plain PBM (P1) file")
    cols, rows = int(tokens[1]), int(tokens[2])
    bits = np.array([int(t) for t in tokens[3:3 + rows * cols]])
    if bits.size != rows * cols or not np.all((bits == 0) | (bits == 1)):
        raise ParameterError(f"{path}: bad pixel data")
    return ImageGrid(rows=rows, cols=cols,
                     pixels=(bits * 2 - 1).reshape(rows, cols))


def reconstruct_image(img, fit_cfg, sampler_cfg):
    """Estimate parameters from a binary image and regenerate one.

    Pipeline: lattice coupling for the image grid, variational fit on
    the flattened pixels, then a Metropolis draw at the fitted
    parameters, reshaped back to an image.
    """
    a = lattice4_adjacency(img.rows, img.cols)
    fit = bbvi_fit(a, img.to_spins(), fit_cfg)
    regen = mh_sample(fit.theta_hat, a, sampler_cfg)
    return ImageGrid.from_spins(regen, img.rows, img.cols), fit


@dataclass
class ReconstructConfig:
    """Input image (path) or generation settings, plus fit and
    regeneration budgets."""

    image_path: Optional[str] = None
    rows: int = 50
    cols: int = 50
    theta0: Optional[ModelParams] = None
    family: str = "bn"
    mc_samples: int = 200
    sampler_iterations: int = DESK_CHAIN_ITERS
    master_seed: int = 0
    bbvi_options: dict = field(default_factory=dict)


def run_reconstruct(rcfg, out_dir):
    """Full pipeline with file outputs: input.pbm, recon.pbm,
    result.json, elbo_trace.csv."""
    os.makedirs(out_dir, exist_ok=True)
    if rcfg.image_path is not None:
        img = load_pbm(rcfg.image_path)
    else:
        theta0 = rcfg.theta0 or ModelParams(beta=1.2, b_field=0.2)
        a = lattice4_adjacency(rcfg.rows, rcfg.cols)
        x0 = mh_sample(theta0, a,
                       MHConfig(iterations=rcfg.sampler_iterations,
                                seed=derive_seed(rcfg.master_seed,
                                                 _TAG_SOURCE_IMAGE)))
        img = ImageGrid.from_spins(x0, rcfg.rows, rcfg.cols)
    save_pbm(img, os.path.join(out_dir, "input.pbm"))
    fit_cfg = BbviConfig(family=rcfg.family, mc_samples=rcfg.mc_samples,
                         seed=derive_seed(rcfg.master_seed, _TAG_IMAGE_FIT),
                         **rcfg.bbvi_options)
    sampler_cfg = MHConfig(iterations=rcfg.sampler_iterations,
                           seed=derive_seed(rcfg.master_seed,
                                            _TAG_IMAGE_REGEN))
    recon, fit = reconstruct_image(img, fit_cfg, sampler_cfg)
    save_pbm(recon, os.path.join(out_dir, "recon.pbm"))
    with open(os.path.join(out_dir, "result.json"), "w") as fh:
        json.dump(fit_result_dict(fit, rcfg.family), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    write_elbo_trace_csv(fit.elbo_trace, os.path.join(out_dir,
                                                      "elbo_trace.csv"))
    return img, recon, fit


# ---------------------------------------------------------------------------
# config parsing

def _theta_from_doc(doc):
    return ModelParams(beta=float(doc["beta"]), b_field=float(doc["b"]))


def _graph_from_doc(doc):
    if doc["kind"] == "regular":
        return GraphSpec(kind="regular", n=int(doc["n"]), d=int(doc["d"]))
    if doc["kind"] == "lattice":
        return GraphSpec(kind="lattice", rows=int(doc["rows"]),
                         cols=int(doc["cols"]))
    raise ParameterError(f"unknown graph kind {doc.get('kind')!r}")


def _methods_from_doc(items):
    return tuple(MethodSpec(name=m["name"],
                            mc_samples=int(m.get("mc_samples", 200)))
                 for m in items)


def _bbvi_options_from_doc(doc):
    allowed = ("max_iters", "rho0", "tau", "patience", "elbo_eval_samples")
    options = doc.get("bbvi", {})
    unknown = set(options) - set(allowed)
    if unknown:
        raise ParameterError(f"unknown bbvi options {sorted(unknown)}")
    return dict(options)


def _cell_from_doc(doc, paper_scale):
    return ExperimentConfig(
        graph=_graph_from_doc(doc["graph"]),
        theta0=_theta_from_doc(doc["theta0"]),
        methods=_methods_from_doc(doc["methods"]),
        replications=(PAPER_REPLICATIONS if paper_scale
                      else int(doc.get("replications", DESK_REPLICATIONS))),
        sampler_iterations=(PAPER_CHAIN_ITERS if paper_scale
                            else int(doc.get("sampler_iterations",
                                             DESK_CHAIN_ITERS))),
        master_seed=int(doc.get("master_seed", 0)),
        bbvi_options=_bbvi_options_from_doc(doc))


def load_bench_config(path, paper_scale=False):
    with open(path) as fh:
        doc = json.load(fh)
    cells = doc["cells"] if "cells" in doc else [doc]
    return [_cell_from_doc(c, paper_scale) for c in cells]


def load_contraction_config(path, paper_scale=False):
    with open(path) as fh:
        doc = json.load(fh)
    return ContractionConfig(
        n_values=tuple(int(n) for n in doc["n_values"]),
        d=int(doc["d"]),
        theta0=_theta_from_doc(doc["theta0"]),
        family=doc.get("family", "mf"),
        mc_samples=int(doc.get("mc_samples", 200)),
        replications=(PAPER_REPLICATIONS if paper_scale
                      else int(doc.get("replications", 30))),
        sampler_iterations=(PAPER_CHAIN_ITERS if paper_scale
                            else int(doc.get("sampler_iterations",
                                             DESK_CHAIN_ITERS))),
        dist_samples=int(doc.get("dist_samples", 2000)),
        master_seed=int(doc.get("master_seed", 0)),
        bbvi_options=_bbvi_options_from_doc(doc))


def load_reconstruct_config(path, paper_scale=False):
    with open(path) as fh:
        doc = json.load(fh)
    theta0 = _theta_from_doc(doc["theta0"]) if "theta0" in doc else None
    return ReconstructConfig(
        image_path=doc.get("image"),
        rows=int(doc.get("rows", 50)),
        cols=int(doc.get("cols", 50)),
        theta0=theta0,
        family=doc.get("family", "bn"),
        mc_samples=int(doc.get("mc_samples", 200)),
        sampler_iterations=(PAPER_CHAIN_ITERS if paper_scale
                            else int(doc.get("sampler_iterations",
                                             DESK_CHAIN_ITERS))),
        master_seed=int(doc.get("master_seed", 0)),
        bbvi_options=_bbvi_options_from_doc(doc))
