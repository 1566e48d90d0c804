"""Command line entry point: ``smoothserve <command> ...``."""

import argparse
import sys

from . import harness
from .lowerbound import ratio_experiment
from .net import build_eta_net, verify_net
from .problems import Problem
from .smoothing import choose_eta

LB_COLUMNS = (
    "problem", "k", "seed", "algorithm", "T", "sigma", "epsilon", "m", "vertex_count",
    "log_k_over_sigma", "online_cost", "ffd_cost", "opt_cost", "opt_kind",
    "online_per_request", "ffd_per_request", "ratio",
)


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_run(args):
    sc = harness.load_config(args.config)
    rows = harness.run_scenario(sc)
    _write(harness.rows_to_csv(rows, timing=args.timing), args.out)


def cmd_sweep(args):
    sc = harness.load_config(args.config)
    values = [v for v in args.values.split(",") if v.strip()]
    if args.axis not in harness.AXES:
        raise harness.ConfigError(f"unknown sweep axis {args.axis!r}")
    rows, axis_values = harness.sweep(sc, args.axis, values)
    _write(harness.rows_to_csv(rows, timing=args.timing, axis=args.axis, axis_values=axis_values), args.out)


def cmd_verify_net(args):
    sc = harness.load_config(args.config)
    ball = harness._ball(sc)
    sigma = sc.sigma if sc.sigma is not None else 1.0
    eta = args.eta if args.eta is not None else choose_eta(Problem.parse(sc.problem), sigma, sc.k,
                                                           ball.dimension, ball.radius)
    net = build_eta_net(ball, eta)
    rep = verify_net(net, n_test=args.samples, seed=args.seed)
    print(f"eta={eta!r} size={rep.size} bound={net.size_bound!r} "
          f"min_separation={rep.min_separation!r} max_projection_distance={rep.max_projection_distance!r}")
    print(f"separated={rep.separated} dense={rep.dense} size_ok={rep.size_ok}")
    return 0 if rep.ok else 1


def cmd_lb(args):
    rows = ratio_experiment(args.problem, _int_list(args.k), args.T, args.seeds,
                            exact_opt_max_t=args.exact_opt_max_t)
    _write(harness.dict_rows_to_csv(rows, LB_COLUMNS), args.out)


def build_parser():
    p = argparse.ArgumentParser(prog="smoothserve", description="Smoothed online k-server / k-taxi / chasing experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every seed of a scenario")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default="-")
    r.add_argument("--timing", action="store_true", help="append a wall-clock runtime column")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario across values of one axis")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True, choices=harness.AXES)
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--out", default="-")
    s.add_argument("--timing", action="store_true")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify-net", help="build and certify the net a scenario would use")
    v.add_argument("--config", required=True)
    v.add_argument("--eta", type=float, default=None, help="override the eta chosen from sigma")
    v.add_argument("--samples", type=int, default=100_000)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify_net)

    lb = sub.add_parser("lb-experiment", help="hypercube lower-bound ratios")
    lb.add_argument("--k", required=True, help="comma-separated k values (each >= 2)")
    lb.add_argument("--T", type=int, required=True)
    lb.add_argument("--seeds", type=int, required=True)
    lb.add_argument("--problem", default="kserver")
    lb.add_argument("--exact-opt-max-t", type=int, default=0)
    lb.add_argument("--out", default="-")
    lb.set_defaults(func=cmd_lb)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (harness.ConfigError, ValueError) as exc:
        print(f"smoothserve: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
