"""Exit criteria, each at its stated tolerance and runtime budget.

Run just these with ``pytest -m acceptance -s``; every criterion prints one
PASS/FAIL line, and the lines are repeated in the terminal summary.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from oracles import dp_kserver, enum_chasing
from smoothserve import harness, kernels
from smoothserve.combiner import BlumBurch, calibrate_beta
from smoothserve.lowerbound import HypercubeInstance, ratio_experiment
from smoothserve.metric import Ball, NormedSpace
from smoothserve.net import build_eta_net, verify_net
from smoothserve.offline import opt_chasing, opt_kserver, opt_ktaxi, opt_projected_vs_original, solve
from smoothserve.online import Ensemble, ProjectionWrapper
from smoothserve.smoothing import (Generator, GeneratorDescriptor, choose_eta, delta_separated_growth,
                                   opt_amortized_bound, separation_delta)

pytestmark = pytest.mark.acceptance

NORMS = ("l1", "l2", "linf")
PROBLEMS = ("kserver", "ktaxi", "chasing")


class Clock:
    def __init__(self, budget):
        self.budget = budget
        self.t0 = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.t0

    @property
    def ok(self):
        return self.elapsed < self.budget

    def __str__(self):
        return f"{self.elapsed:.1f}s of {self.budget:.0f}s"


def se_of(values):
    values = np.asarray(values, dtype=float)
    return values.std(ddof=1) / math.sqrt(len(values))


def smoothed_stream(problem, ball, k, T, rng):
    rho = ball.radius * float(rng.uniform(0.2, 1.0))
    desc = GeneratorDescriptor("perturbed", problem, rho=rho,
                               schedule=("cycle", "adaptive_far")[int(rng.integers(2))])
    gen = Generator(desc, ball, k)
    return gen.stream(T, rng), gen.initial, gen.sigma


# ------------------------------------------------------------------- 1


def test_1_net_correctness(acceptance):
    clock = Clock(120)
    rng = np.random.default_rng(2024)
    # smallest eta/R per dimension keeps every net within a few thousand points
    low = {1: 0.005, 2: 0.03, 3: 0.12}
    failures, sizes = [], []
    for i in range(50):
        m = int(rng.integers(1, 4))
        norm = NORMS[int(rng.integers(3))]
        R = float(rng.uniform(0.5, 2.0))
        eta = R * float(np.exp(rng.uniform(math.log(low[m]), math.log(1.2))))
        net = build_eta_net(Ball.centered(m, norm, R), eta)
        rep = verify_net(net, n_test=100_000, seed=i)
        sizes.append(len(net))
        if not rep.ok:
            failures.append((m, norm, R, eta, rep))
    ok = not failures and clock.ok
    acceptance(1, "nets separated, dense, within size bound", ok,
               f"50 configs, {len(failures)} failures, sizes {min(sizes)}..{max(sizes)}, {clock}")
    assert ok, failures


# ------------------------------------------------------------------- 2


def test_2_reduction_ledger_identity(acceptance):
    clock = Clock(60)
    rng = np.random.default_rng(7)
    worst_gap, worst_detour_ratio, bad = 0.0, 0.0, 0
    for problem in PROBLEMS:
        for _ in range(100):
            m = int(rng.integers(1, 3))
            ball = Ball.centered(m, NORMS[int(rng.integers(3))], 1.0)
            k = int(rng.integers(1, 4))
            T = int(rng.integers(20, 501))
            reqs, init, sigma = smoothed_stream(problem, ball, k, T, rng)
            net = build_eta_net(ball, choose_eta(problem, sigma, k, m, 1.0))
            w = ProjectionWrapper(net, problem, init, ("greedy", "auto")[int(rng.integers(2))])
            detours = []
            for r in reqs:
                _, _, d = w.step(r)
                detours.append(d)
                if d > 2.0 * net.eta:
                    bad += 1
                worst_detour_ratio = max(worst_detour_ratio, d / (2.0 * net.eta))
            want = w.inner.ledger.total + math.fsum(detours) + w.ledger.initial
            worst_gap = max(worst_gap, abs(w.ledger.total - want))
    ok = worst_gap <= 1e-9 and bad == 0 and clock.ok
    acceptance(2, "cost(A_M) = cost(A_N) + detours + initial projection", ok,
               f"300 traces, max gap {worst_gap:.2e}, max detour/(2 eta) {worst_detour_ratio:.3f}, {clock}")
    assert ok


# ------------------------------------------------------------------- 3


def test_3_offline_oracle_equivalence(acceptance):
    clock = Clock(120)
    rng = np.random.default_rng(3)
    ks_gap = ch_gap = tx_gap = 0.0
    for trial in range(200):
        m = int(rng.integers(1, 3))
        space = NormedSpace(m, NORMS[trial % 3])
        pts = rng.random((int(rng.integers(2, 6)), m))
        k = int(rng.integers(1, 4))
        init = pts[rng.integers(0, len(pts), k)]
        reqs = pts[rng.integers(0, len(pts), int(rng.integers(1, 7)))]
        ks_gap = max(ks_gap, abs(opt_kserver(reqs, k, init, space)[0] - dp_kserver(space, init, reqs)))
    for trial in range(200):
        space = NormedSpace(2, NORMS[trial % 3])
        k = int(rng.integers(1, 5))
        sets = [rng.random((int(rng.integers(1, k + 1)), 2)) for _ in range(int(rng.integers(1, 9)))]
        init = rng.random((1, 2))
        ch_gap = max(ch_gap, abs(opt_chasing(sets, init, space)[0] - enum_chasing(space, init, sets)))
    for trial in range(100):
        space = NormedSpace(2, NORMS[trial % 3])
        k = int(rng.integers(1, 4))
        pts = rng.random((int(rng.integers(1, 30)), 2))
        init = rng.random((k, 2))
        a = opt_kserver(pts, k, init, space)[0]
        b = opt_ktaxi(np.stack([pts, pts], axis=1), k, init, space)[0]
        tx_gap = max(tx_gap, abs(a - b))
    ok = max(ks_gap, ch_gap, tx_gap) <= 1e-9 and clock.ok
    acceptance(3, "flow/DP oracles match brute force", ok,
               f"k-server gap {ks_gap:.1e}, chasing gap {ch_gap:.1e}, taxi=server gap {tx_gap:.1e}, {clock}")
    assert ok


# ------------------------------------------------------------------- 4


def test_4_projected_opt_inequality(acceptance):
    clock = Clock(60)
    rng = np.random.default_rng(4)
    worst, count, bad = -math.inf, 0, 0
    for problem in PROBLEMS:
        for _ in range(100):
            m = int(rng.integers(1, 3))
            ball = Ball.centered(m, NORMS[int(rng.integers(3))], 1.0)
            k = int(rng.integers(1, 4))
            T = 20
            reqs, init, sigma = smoothed_stream(problem, ball, k, T, rng)
            net = build_eta_net(ball, min(choose_eta(problem, sigma, k, m, 1.0), 0.9))
            rep = opt_projected_vs_original(problem, reqs, k, init, net)
            slack = rep.opt_net - (rep.opt_original + 2.0 * net.eta * T)
            worst = max(worst, slack)
            bad += slack > rep.tolerance or not rep.ok
            count += 1
    ok = bad == 0 and clock.ok
    acceptance(4, "OPT_N <= OPT_M + 2 eta T", ok,
               f"{count} instances, {bad} violations, max OPT_N - bound {worst:.3e}, {clock}")
    assert ok


# ------------------------------------------------------------------- 5


def test_5_smoothed_opt_lower_bound(acceptance):
    clock = Clock(300)
    ball = Ball.centered(1, "l2", 1.0)
    results = {}
    for problem, k, bound_want in (("kserver", 2, 0.0078125), ("chasing", 1, 0.25)):
        bound = opt_amortized_bound(problem, 1.0, k, 1, 1.0)
        assert bound == bound_want
        gen = Generator(GeneratorDescriptor("uniform", problem), ball, k)
        per = []
        for seed in range(30):
            reqs = gen.stream(2000, np.random.default_rng([5, seed]))
            per.append(solve(problem, reqs, k, gen.initial, ball.space)[0] / 2000)
        mean, se = float(np.mean(per)), se_of(per)
        results[problem] = (mean, se, bound, mean >= bound - 3 * se)
    ok = all(r[3] for r in results.values()) and clock.ok
    detail = ", ".join(f"{p}: OPT/T {m:.4f} (se {s:.1e}) vs bound {b}" for p, (m, s, b, _) in results.items())
    acceptance(5, "per-request OPT above the smoothed lower bound", ok, f"{detail}, {clock}")
    assert ok


# ------------------------------------------------------------------- 6


def test_6_delta_separated_growth(acceptance):
    clock = Clock(180)
    rng = np.random.default_rng(6)
    lines, ok = [], True
    for problem in ("kserver", "ktaxi"):
        for k, m in ((2, 1), (4, 1), (4, 2), (8, 3)):
            ball = Ball.centered(m, "l2", 1.0)
            delta = separation_delta(problem, 1.0, k, m, 1.0)
            assert delta == 1.0 * (1.0 / (8 * k)) ** (1 / m)
            gen = Generator(GeneratorDescriptor("uniform", problem), ball, k)
            insert_rate, big = [], []
            for _ in range(500):
                window = gen.stream(4 * k, rng)
                size, log = delta_separated_growth(problem, window, delta, ball.space, k=k)
                insert_rate.append(np.mean(log))
                big.append(size >= 2 * k)
            p_ins, p_big = float(np.mean(insert_rate)), float(np.mean(big))
            good = p_ins >= 0.5 - 3 * se_of(insert_rate) and p_big >= 0.5 - 3 * math.sqrt(0.25 / 500)
            ok &= good
            lines.append(f"{problem} k={k} m={m}: insert {p_ins:.3f}, P(|S|>=2k) {p_big:.3f}")
    ok = ok and clock.ok
    acceptance(6, "delta-separated subset grows", ok, "; ".join(lines) + f", {clock}")
    assert ok


# ------------------------------------------------------------------- 7


def _synthetic(rng, T, L, diam):
    good = (np.arange(T) // 500) % L
    block = np.full((T, L), diam)
    block[np.arange(T), good] = 0.0
    noisy = rng.random((T, L)) * diam
    noisy[:, 2] *= 0.6
    late = np.full((T, L), 0.5 * diam)
    late[: T // 2, 0] = 0.0
    late[T // 2:, 0] = diam
    late[T // 2:, 3] = 0.1 * diam
    flip = np.where((np.arange(T) % 2)[:, None] == np.arange(L)[None, :] % 2, diam, 0.0)
    return {"rotating": block, "noisy": noisy, "late-switch": late, "alternating": flip}


def test_7_combiner_bound(acceptance):
    clock = Clock(60)
    # l = 1: the combiner is the lone expert
    ball = Ball.centered(2, "l2", 1.0)
    rng = np.random.default_rng(70)
    reqs, init, sigma = smoothed_stream("kserver", ball, 2, 300, rng)
    lone = ProjectionWrapper(build_eta_net(ball, choose_eta("kserver", sigma, 2, 2, 1.0)), "kserver", init)
    twin = ProjectionWrapper(lone.net, "kserver", init)
    ens = Ensemble([twin], "kserver", ball.space, diam=4.0, seed=1)
    for r in reqs:
        lone.step(r)
        ens.step(r)
    identity = (ens.bb.switches == [] and
                [x.movement for x in ens.ledger.records] == [x.cost for x in lone.ledger.records])
    bb = BlumBurch(1, 1.0)
    stream = rng.random(1000)
    identity &= [bb.step(np.array([c]))[1] for c in stream] == stream.tolist()

    T, L, diam = 10_000, 4, 1.0
    rate = calibrate_beta(1.0) / diam
    switch = diam * (1.0 - np.eye(L))
    lines, bound_ok = [], True
    for name, costs in _synthetic(np.random.default_rng(71), T, L, diam).items():
        totals = []
        for seed in range(100):
            U = np.random.default_rng([7, seed]).random((T, 2))
            service, moving, _, _ = kernels.hedge_stream(costs, switch, rate, U, 0)
            totals.append(service + moving)
        best = costs.sum(axis=0).min()
        cap = 2 * best + 8 * diam * math.log(L)
        bound_ok &= float(np.mean(totals)) <= cap
        lines.append(f"{name} {np.mean(totals):.1f}<={cap:.1f}")
    ok = identity and bound_ok and clock.ok
    acceptance(7, "combiner tracks the best expert", ok,
               f"l=1 identity {identity}; " + ", ".join(lines) + f", {clock}")
    assert ok


# ------------------------------------------------------------------- 8


def test_8_lower_bound_trend(acceptance):
    clock = Clock(600)
    ks, T, seeds = (2, 4, 8, 16), 5000, 20
    rows = ratio_experiment("kserver", ks, T, seeds)
    algs = sorted({r["algorithm"] for r in rows})
    ok, notes = True, []
    for k in ks:
        inst = HypercubeInstance(k)
        assert all(r["sigma"] == (k + 1) * inst.eps ** inst.m for r in rows if r["k"] == k)
        floor = (1 - 2 * inst.eps) / (k + 1)
        for a in algs:
            per = [r["online_per_request"] for r in rows if r["k"] == k and r["algorithm"] == a]
            ok &= float(np.mean(per)) >= floor - 3 * se_of(per)
        if k >= 4:
            ffd = [r["ffd_per_request"] for r in rows if r["k"] == k and r["algorithm"] == algs[0]]
            cap = 2 / (k * math.log(k)) + inst.eps
            ok &= float(np.mean(ffd)) <= cap
            notes.append(f"k={k} ffd {np.mean(ffd):.4f}<={cap:.4f}")
    for a in algs:
        r2 = np.mean([r["ratio"] for r in rows if r["k"] == 2 and r["algorithm"] == a])
        r16 = np.mean([r["ratio"] for r in rows if r["k"] == 16 and r["algorithm"] == a])
        ok &= r16 > r2
        notes.append(f"{a} ratio {r2:.2f}->{r16:.2f}")
    ok = ok and clock.ok
    acceptance(8, "hypercube ratio grows with k", ok, "; ".join(notes) + f", {clock}")
    assert ok


# ------------------------------------------------------------------- 9

SCENARIOS = {
    "kserver": "problem = kserver\nk = 2\nm = 2\ngenerator = perturbed\nrho = 0.4\n"
               "schedule = adaptive_far\nalgorithm = wrapped:auto\nT = 300\nseeds = 0, 1, 2\n",
    "ktaxi": "problem = ktaxi\nk = 2\nm = 1\ngenerator = uniform\nalgorithm = ensemble:auto\n"
             "sigma_mode = unknown\nsigma_floor = 0.01\nT = 200\nseeds = 3, 4\n",
    "chasing": "problem = chasing\nk = 3\nm = 2\nnorm = l1\ngenerator = perturbed\nrho = 0.5\n"
               "algorithm = ensemble:wfa\nsigma_mode = unknown\nT = 200\nseeds = 5\n",
    "hypercube": "problem = kserver\nk = 4\ngenerator = hypercube\nalgorithm = wrapped:marking\n"
                 "T = 4000\nseeds = 0, 1\n",
}


def test_9_determinism(acceptance, tmp_path, monkeypatch):
    clock = Clock(300)
    same = {}
    for name, text in SCENARIOS.items():
        sc = harness.parse_config(text)
        first = harness.rows_to_csv(harness.run_scenario(sc))
        second = harness.rows_to_csv(harness.run_scenario(sc))
        monkeypatch.setenv(harness.WORKERS_ENV, "2")
        parallel = harness.rows_to_csv(harness.run_scenario(sc))
        monkeypatch.delenv(harness.WORKERS_ENV)
        same[name] = first == second == parallel
    cfg = tmp_path / "s.cfg"
    cfg.write_text(SCENARIOS["kserver"])
    cli = [sys.executable, "-m", "smoothserve.cli"]
    outs = [subprocess.run(cli + ["sweep", "--config", str(cfg), "--axis", "sigma", "--values", "1,0.2"],
                           capture_output=True, check=True).stdout for _ in range(2)]
    lbs = [subprocess.run(cli + ["lb-experiment", "--k", "2,4", "--T", "300", "--seeds", "2"],
                          capture_output=True, check=True).stdout for _ in range(2)]
    same["cli sweep"] = outs[0] == outs[1] and outs[0].count(b"\n") == 7
    same["cli lb"] = lbs[0] == lbs[1]
    ok = all(same.values()) and clock.ok
    acceptance(9, "reruns are byte-identical", ok,
               ", ".join(f"{k}={'same' if v else 'DIFF'}" for k, v in same.items()) + f", {clock}")
    assert ok
