"""Command-line interface.

Verbs: coupling gen-regular / gen-lattice / report, sample, fit, pmle,
bench, contraction, reconstruct.  All outputs are plain text and are
byte-identical across reruns with the same arguments; wall-clock
timings are only written when a --timings path is given and that file
is excluded from the guarantee.
"""

import argparse
import json
import sys

from . import experiments
from .coupling import (assumption_report, lattice4_adjacency, load_coupling,
                       random_regular_edges, save_coupling, scaled_adjacency)
from .errors import (CapacityError, ConvergenceError, DomainError,
                     GenerationError, ParameterError)
from .experiments import fit_result_dict
from .ising import ModelParams, load_spins, save_spins
from .pmle import PmleConfig, pmle_fit
from .sampler import MHConfig, mh_sample
from .vb import BbviConfig, bbvi_fit

_USER_ERRORS = (ParameterError, GenerationError, CapacityError, DomainError,
                FileNotFoundError, KeyError, ValueError)


def _write_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_coupling(args):
    if args.subcommand == "gen-regular":
        a = scaled_adjacency(random_regular_edges(args.n, args.d, args.seed))
        save_coupling(a, args.out)
    elif args.subcommand == "gen-lattice":
        save_coupling(lattice4_adjacency(args.rows, args.cols), args.out)
    elif args.subcommand == "report":
        a = load_coupling(args.in_path)
        rep = assumption_report(a)
        print(f"n {a.n}")
        print(f"edges {a.edge_count}")
        print(f"gamma {rep.gamma!r}")
        print(f"sum_A {rep.sum_a!r}")
        print(f"sum_A_sq {rep.sum_a_sq!r}")
        print(f"rowsum_variance {rep.rowsum_variance!r}")


def _cmd_sample(args):
    a = load_coupling(args.coupling)
    theta = ModelParams(beta=args.beta, b_field=args.b)
    x = mh_sample(theta, a, MHConfig(iterations=args.iters, seed=args.seed))
    save_spins(x, args.out)


def _cmd_fit(args):
    a = load_coupling(args.coupling)
    x = load_spins(args.data)
    cfg = BbviConfig(family=args.family, mc_samples=args.mc_samples,
                     max_iters=args.max_iters, seed=args.seed)
    fit = bbvi_fit(a, x, cfg)
    _write_json(fit_result_dict(fit, args.family), args.out)
    if args.elbo_trace:
        experiments.write_elbo_trace_csv(fit.elbo_trace, args.elbo_trace)
    if args.timings:
        _write_json({"wall_time": fit.wall_time}, args.timings)


def _cmd_pmle(args):
    a = load_coupling(args.coupling)
    x = load_spins(args.data)
    res = pmle_fit(a, x, PmleConfig())
    _write_json({"beta": res.params.beta, "b": res.params.b_field,
                 "grad_norm": res.grad_norm, "iterations": res.iterations,
                 "boundary": res.boundary}, args.out)


def _cmd_bench(args):
    cells = experiments.load_bench_config(args.config,
                                          paper_scale=args.paper_scale)
    experiments.run_bench(cells, args.out_dir, workers=args.workers,
                          timings_path=args.timings)


def _cmd_contraction(args):
    ccfg = experiments.load_contraction_config(args.config,
                                               paper_scale=args.paper_scale)
    experiments.run_contraction(ccfg, args.out_dir, workers=args.workers)


def _cmd_reconstruct(args):
    rcfg = experiments.load_reconstruct_config(args.config,
                                               paper_scale=args.paper_scale)
    experiments.run_reconstruct(rcfg, args.out_dir)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="isingvb",
        description="Bayesian estimation of two-parameter spin models "
                    "from a single configuration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_coupling = sub.add_parser("coupling", help="build or inspect coupling "
                                                 "matrices")
    csub = p_coupling.add_subparsers(dest="subcommand", required=True)
    p_reg = csub.add_parser("gen-regular", help="random d-regular scaled "
                                                "adjacency")
    p_reg.add_argument("--n", type=int, required=True)
    p_reg.add_argument("--d", type=int, required=True)
    p_reg.add_argument("--seed", type=int, default=0)
    p_reg.add_argument("--out", required=True)
    p_lat = csub.add_parser("gen-lattice", help="4-nearest-neighbour lattice "
                                                "scaled adjacency")
    p_lat.add_argument("--rows", type=int, required=True)
    p_lat.add_argument("--cols", type=int, required=True)
    p_lat.add_argument("--out", required=True)
    p_rep = csub.add_parser("report", help="print row-sum and mass "
                                           "diagnostics")
    p_rep.add_argument("--in", dest="in_path", required=True)

    p_sample = sub.add_parser("sample", help="draw one configuration with a "
                                             "Metropolis chain")
    p_sample.add_argument("--coupling", required=True)
    p_sample.add_argument("--beta", type=float, required=True)
    p_sample.add_argument("--b", type=float, required=True)
    p_sample.add_argument("--iters", type=int,
                          default=experiments.DESK_CHAIN_ITERS)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", required=True)

    p_fit = sub.add_parser("fit", help="variational fit of (beta, b)")
    p_fit.add_argument("--coupling", required=True)
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--family", choices=("mf", "bn"), required=True)
    p_fit.add_argument("--mc-samples", type=int, default=200)
    p_fit.add_argument("--max-iters", type=int, default=3000)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--elbo-trace", default=None,
                       help="optional CSV of per-iteration ELBO estimates")
    p_fit.add_argument("--timings", default=None,
                       help="optional wall-time sidecar (not deterministic)")
    p_fit.add_argument("--out", required=True)

    p_pmle = sub.add_parser("pmle", help="maximum pseudo-likelihood fit")
    p_pmle.add_argument("--coupling", required=True)
    p_pmle.add_argument("--data", required=True)
    p_pmle.add_argument("--out", required=True)

    for name, fn in (("bench", _cmd_bench), ("contraction", _cmd_contraction),
                     ("reconstruct", _cmd_reconstruct)):
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--paper-scale", action="store_true",
                       help="full-scale budgets: 100 replications, "
                            "1,000,000 chain steps")
        if name != "reconstruct":
            p.add_argument("--workers", type=int, default=1)
        if name == "bench":
            p.add_argument("--timings", default=None,
                           help="optional wall-time sidecar CSV")
        p.set_defaults(func=fn)

    p_coupling.set_defaults(func=_cmd_coupling)
    p_sample.set_defaults(func=_cmd_sample)
    p_fit.set_defaults(func=_cmd_fit)
    p_pmle.set_defaults(func=_cmd_pmle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
