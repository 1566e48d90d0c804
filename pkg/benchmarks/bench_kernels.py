"""Compare the numba and numpy variants of every hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on a fixed workload through both paths; outputs are checked
for agreement before timings are reported. A last section times whole
operations (net build, offline OPT) in a child process with
SMOOTHSERVE_DISABLE_NUMBA set and unset.
"""

import argparse
import itertools
import os
import subprocess
import sys
import time

import numpy as np

from smoothserve import kernels
from smoothserve.flow import FlowNetwork


def workloads(rng):
    P = rng.random((400, 3))
    Q = rng.random((5000, 3))
    pts = rng.random((9, 2))
    dmat = np.abs(pts[:, None] - pts[None]).sum(axis=2)
    cfgs = np.array(list(itertools.combinations(range(9), 4)), dtype=np.int64)
    perms = np.array(list(itertools.permutations(range(4))), dtype=np.int64)
    D = kernels.config_distances(cfgs, dmat, perms)
    w = rng.random(len(cfgs))
    col = rng.integers(0, len(cfgs), 60)

    n = 300
    net = FlowNetwork(n)
    for u in range(n):
        v = np.arange(u + 1, min(n, u + 40))
        net.add_arcs(u, v, 1, rng.integers(-50, 500, len(v)))
    net.freeze()
    graph = (n, net.start, net.adj, net.to, net.cost, net.cap)
    pot = kernels.dag_potentials(*graph, 0)
    pot = np.where(pot >= kernels.IINF, 0, pot)

    costs = rng.random((20_000, 6))
    return {
        "nearest": (P, Q, kernels.L2),
        "min_pair": (P, kernels.LINF),
        "greedy_insert": (Q, 0.08, kernels.L1, np.empty_like(Q), 0),
        "config_distances": (cfgs, dmat, perms),
        "wfa_update": (w, D, col, col),
        "dijkstra": (*graph, pot, 0),
        "dag_potentials": (*graph, 0),
        "hedge_stream": (costs, 1.0 - np.eye(6), 0.5, rng.random((20_000, 2)), 0),
    }


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        fresh = [a.copy() if isinstance(a, np.ndarray) else a for a in args]
        t = time.perf_counter()
        out = fn(*fresh)
        times.append(time.perf_counter() - t)
    return min(times), out


def agree(a, b):
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=0, atol=1e-12)


WHOLE = """
import time
import numpy as np
from smoothserve.metric import Ball
from smoothserve.net import build_eta_net, verify_net
from smoothserve.offline import opt_kserver
ball = Ball.centered(2, "l2", 1.0)
t = time.perf_counter(); net = build_eta_net(ball, 0.05); a = time.perf_counter() - t
t = time.perf_counter(); verify_net(net, n_test=20000); b = time.perf_counter() - t
rng = np.random.default_rng(0)
t = time.perf_counter(); opt_kserver(ball.sample_uniform(rng, 400), 3, ball.sample_uniform(rng, 3), ball.space)
c = time.perf_counter() - t
print(a, b, c)
"""


def whole_operations(disable):
    env = dict(os.environ)
    env.pop("SMOOTHSERVE_DISABLE_NUMBA", None)
    if disable:
        env["SMOOTHSERVE_DISABLE_NUMBA"] = "1"
    # warm run first so the compiled path is measured from the on-disk cache
    subprocess.run([sys.executable, "-c", WHOLE], env=env, check=True, capture_output=True)
    out = subprocess.run([sys.executable, "-c", WHOLE], env=env, check=True, capture_output=True, text=True)
    return [float(v) for v in out.stdout.split()]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}  agree")
    for name, inputs in workloads(rng).items():
        nb, np_ = kernels.VARIANTS[name]
        best_of(nb, inputs, 1)  # compile
        t_nb, out_nb = best_of(nb, inputs, args.repeat)
        t_np, out_np = best_of(np_, inputs, args.repeat)
        print(f"{name:<18}{t_nb * 1e3:>12.2f}{t_np * 1e3:>12.2f}{t_np / t_nb:>10.1f}  {agree(out_nb, out_np)}")

    print()
    print(f"{'operation':<18}{'numba s':>12}{'numpy s':>12}{'speedup':>10}")
    fast, slow = whole_operations(False), whole_operations(True)
    for label, a, b in zip(("build_eta_net", "verify_net", "opt_kserver"), fast, slow):
        print(f"{label:<18}{a:>12.3f}{b:>12.3f}{b / a:>10.1f}")


if __name__ == "__main__":
    main()
