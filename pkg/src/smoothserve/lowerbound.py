"""The hypercube lower-bound family and its furthest-in-future offline strategy.

The instance lives on ``[0,1]^m`` under Linf with ``m = ceil(log2(k+1))``.
``V`` holds the first ``k+1`` binary vertices in lexicographic order and
``eps = 1 / (2 k log2 k)``. A point is near vertex ``v`` when its Linf distance
to ``v`` is at most ``eps``; inside the cube that is the corner box
``v + (1 - 2v) * [0, eps]^m``. Requests are uniform on the union ``P`` of these
boxes, so the marginal density is ``1/vol(P)`` against ``vol(B) = 1``, i.e.
``sigma = (k+1) eps^m``.
"""

import itertools
import math

import numpy as np

from .metric import Ball, NormedSpace
from .net import net_from_points
from .problems import Problem, replay


class HypercubeInstance:
    def __init__(self, k):
        if k < 2:
            raise ValueError("the hypercube instance needs k >= 2")
        self.k = int(k)
        self.m = max(1, math.ceil(math.log2(k + 1)))
        self.eps = 1.0 / (2.0 * k * math.log2(k))
        verts = itertools.islice(itertools.product((0.0, 1.0), repeat=self.m), k + 1)
        self.V = np.array(list(verts))
        self.space = NormedSpace(self.m, "linf")
        self.ball = Ball(self.space, tuple(np.full(self.m, 0.5)), 0.5)

    @property
    def sigma(self):
        return (self.k + 1) * self.eps**self.m

    @property
    def vertex_count(self):
        return len(self.V)

    def vertex_net(self):
        """The vertices as a net of ``P`` at scale ``eps``."""
        return net_from_points(self.ball, self.eps, self.V)

    def near(self, vid, rng, count):
        v = self.V[vid]
        return v + (1.0 - 2.0 * v) * rng.random((count, self.m)) * self.eps

    def vertex_of(self, X):
        """Index of the vertex each point is near; ValueError for points outside P."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        D = np.abs(X[:, None, :] - self.V[None, :, :]).max(axis=2)
        ids = np.argmin(D, axis=1)
        if np.any(D[np.arange(len(X)), ids] > self.eps):
            raise ValueError("point is not near any vertex of V")
        return ids

    def sample(self, problem, rng):
        problem = Problem.parse(problem)
        if problem is Problem.CHASING:
            skip = rng.integers(self.k + 1)
            chosen = [v for v in range(self.k + 1) if v != skip]
            return np.vstack([self.near(v, rng, 1) for v in chosen])
        vid = rng.integers(self.k + 1)
        if problem is Problem.KTAXI:
            return self.near(vid, rng, 2)
        return self.near(vid, rng, 1)[0]

    def stream(self, problem, T, rng):
        return [self.sample(problem, rng) for _ in range(T)]

    def initial(self, problem):
        if Problem.parse(problem) is Problem.CHASING:
            return self.V[:1].copy()
        return self.V[: self.k].copy()


def _next_use(seq, T, n):
    """``nxt[t, v]``: first time >= t at which vertex ``v`` shows up (``T`` if never)."""
    nxt = np.full((T + 1, n), T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        nxt[t] = nxt[t + 1]
        for v in seq[t]:
            nxt[t, v] = t
    return nxt


def offline_ffd_strategy(instance, requests, problem=Problem.KSERVER, initial=None):
    """Furthest-in-future service of a realized hypercube sequence.

    Each server owns a vertex region. A request near an owned vertex is served
    by that owner (a move of at most eps inside the region); otherwise the
    server whose vertex is next requested furthest in the future (ties to the
    lowest vertex index) moves over. For chasing the single server stays on its
    vertex while it is covered and otherwise jumps to the covered vertex that
    stays covered longest. Returns (cost, decisions).
    """
    problem = Problem.parse(problem)
    n = instance.vertex_count
    T = len(requests)
    initial = instance.initial(problem) if initial is None else np.asarray(initial, dtype=float)
    if problem is Problem.CHASING:
        sets = [instance.vertex_of(np.asarray(r)) for r in requests]
        missing = [sorted(set(range(n)) - set(s.tolist())) for s in sets]
        miss_next = _next_use(missing, T, n)
        at = int(instance.vertex_of(initial)[0])
        decisions = []
        for t, ids in enumerate(sets):
            hit = np.flatnonzero(ids == at)
            if len(hit) == 0:
                lasting = miss_next[t + 1, ids]
                j = int(np.flatnonzero(lasting == lasting.max())[0])
                at = int(ids[j])
                hit = [j]
            decisions.append(int(hit[0]))
        _, ledger = replay(problem, instance.space, initial, requests, decisions)
        return ledger.total, decisions

    pick = [r[0] if problem is Problem.KTAXI else r for r in requests]
    seq = instance.vertex_of(np.asarray(pick)).tolist()
    if problem is Problem.KTAXI:
        drop = instance.vertex_of(np.asarray([r[1] for r in requests])).tolist()
        if drop != seq:
            raise ValueError("taxi drop-off must be near the pickup vertex")
    nxt = _next_use([[v] for v in seq], T, n)
    owner = list(instance.vertex_of(initial))
    decisions = []
    for t, v in enumerate(seq):
        if v in owner:
            i = owner.index(v)
        else:
            i = max(range(len(owner)), key=lambda s: (nxt[t + 1, owner[s]], -owner[s]))
            owner[i] = v
        decisions.append(i)
    _, ledger = replay(problem, instance.space, initial, requests, decisions)
    return ledger.total, decisions


# wrapped:auto falls back to greedy when the WFA table would not fit (taxis, k >= 8)
LB_ALGORITHMS = ("greedy", "wrapped:auto", "wrapped:marking")
OPT_EXACT_MAX_T = 3000


def _run_online(name, problem, inst, initial, requests, seed):
    from .online import make_algorithm

    if name == "wrapped:marking" and problem is not Problem.KSERVER:
        return None
    alg = make_algorithm(name, problem, inst.ball, inst.k, initial, net=inst.vertex_net(), seed=seed)
    for r in requests:
        alg.step(r)
    return alg.label, alg.ledger.total


def ratio_experiment(problem, ks, T, seeds, algorithms=LB_ALGORITHMS, exact_opt_max_t=0):
    """Rows of online vs offline cost on the hypercube family.

    ``seeds`` is a count or an iterable of seeds. The offline column is the
    furthest-in-future cost, an upper bound on OPT; when ``T`` is at most
    ``exact_opt_max_t`` the exact optimum is added as well.
    """
    from .offline import solve

    problem = Problem.parse(problem)
    seeds = range(seeds) if isinstance(seeds, int) else list(seeds)
    rows = []
    for k in ks:
        inst = HypercubeInstance(k)
        init = inst.initial(problem)
        for seed in seeds:
            rng = np.random.default_rng([int(k), int(seed)])
            reqs = inst.stream(problem, T, rng)
            ffd, _ = offline_ffd_strategy(inst, reqs, problem, init)
            opt = None
            if T <= exact_opt_max_t:
                opt, _ = solve(problem, reqs, k, init, inst.space)
            for name in algorithms:
                run = _run_online(name, problem, inst, init, reqs, seed)
                if run is None:
                    continue
                label, online = run
                denom = opt if opt is not None else ffd
                rows.append({
                    "problem": problem.value, "k": k, "seed": seed, "algorithm": label, "T": T,
                    "sigma": inst.sigma, "epsilon": inst.eps, "m": inst.m,
                    "vertex_count": inst.vertex_count,
                    "log_k_over_sigma": math.log(k / inst.sigma),
                    "online_cost": online, "ffd_cost": ffd, "opt_cost": opt,
                    "opt_kind": "exact" if opt is not None else "upper_bound",
                    "online_per_request": online / T, "ffd_per_request": ffd / T,
                    "ratio": online / denom if denom > 0 else math.inf,
                })
    return rows
