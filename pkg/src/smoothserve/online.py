"""Online algorithms: finite-metric black boxes, the projection wrapper, and
the unknown-sigma ensemble.

Finite algorithms work on point ids of a distance matrix ``dmat``:

* k-server requests are ids, decisions are server ids;
* k-taxi requests are ``(a, b)`` id pairs, decisions are taxi ids;
* chasing requests are id sequences, decisions index into the sequence.

Continuous algorithms (:class:`ProjectionWrapper`, :class:`RawGreedy`,
:class:`Ensemble`) take raw request arrays as described in
:mod:`smoothserve.problems` and keep a :class:`~smoothserve.problems.CostLedger`.
"""

import itertools
import math
from collections import Counter

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .combiner import BlumBurch, config_diameter, switching_cost
from .metric import distance
from .net import build_eta_net, project_many
from .problems import CostLedger, Problem, as_request, serve
from .smoothing import choose_eta

MAX_CONFIGS = 3000
MAX_FINE_NET = 1500
MAX_PERM_K = 6
_TIE = 1e-9


def _argmin_tie(values, movement):
    """Lowest value; near-ties go to the smaller movement, then the lowest index."""
    values = np.asarray(values, dtype=float)
    best = values.min()
    cand = np.flatnonzero(values <= best + _TIE * max(1.0, abs(best)))
    mv = np.asarray(movement, dtype=float)[cand]
    return int(cand[np.flatnonzero(mv == mv.min())[0]])


# ---------------------------------------------------------------- finite


class FiniteAlgorithm:
    name = "finite"

    def __init__(self, problem, dmat, initial):
        self.problem = Problem.parse(problem)
        self.dmat = np.asarray(dmat, dtype=float)
        self.n = len(self.dmat)
        init = np.asarray(initial, dtype=np.int64).ravel()
        if self.problem is Problem.CHASING and len(init) != 1:
            raise ValueError("chasing starts from a single point")
        self._check(init)
        self.config = init.copy()
        self.k = len(init)
        self.ledger = CostLedger()

    def _check(self, ids):
        ids = np.asarray(ids, dtype=np.int64).ravel()
        if len(ids) == 0 or ids.min() < 0 or ids.max() >= self.n:
            raise ValueError(f"request ids {ids.tolist()} are not points of the {self.n}-point metric")
        return ids

    def step(self, req):
        """Serve one projected request; returns (decision, cost)."""
        if self.problem is Problem.KSERVER:
            r = int(self._check([req])[0])
            dec = self._kserver(r)
            cost = self.dmat[self.config[dec], r]
            self.config[dec] = r
        elif self.problem is Problem.KTAXI:
            a, b = (int(v) for v in self._check(req))
            dec = self._ktaxi(a, b)
            cost = self.dmat[self.config[dec], a]
            self.config[dec] = b
        else:
            ids = self._check(req)
            dec = self._chase(ids)
            cost = self.dmat[self.config[0], ids[dec]]
            self.config[0] = ids[dec]
        self.ledger.add(float(cost), 0.0, dec)
        return dec, float(cost)


class Greedy(FiniteAlgorithm):
    name = "greedy"

    def _kserver(self, r):
        return int(np.argmin(self.dmat[self.config, r]))

    def _ktaxi(self, a, b):
        return int(np.argmin(self.dmat[self.config, a]))

    def _chase(self, ids):
        return int(np.argmin(self.dmat[self.config[0], ids]))


def greedy_step(config, request, problem, space):
    """Greedy decision on raw coordinates (nearest server, ties to the lowest id)."""
    problem = Problem.parse(problem)
    config = np.asarray(config, dtype=float).reshape(-1, space.dimension)
    if problem is Problem.KSERVER:
        return int(np.argmin(space.distances(config, request)))
    if problem is Problem.KTAXI:
        a = np.asarray(request, dtype=float).reshape(2, space.dimension)[0]
        return int(np.argmin(space.distances(config, a)))
    pts = np.asarray(request, dtype=float).reshape(-1, space.dimension)
    return int(np.argmin(space.distances(pts, config[0])))


def config_distance_table(cfgs, dmat):
    """Matching distance between every pair of configurations (rows of point ids).

    Small k scans all permutations in a kernel. Larger k solves one assignment
    problem per pair on the points the two configurations do not share; fixing
    shared points never hurts by the triangle inequality.
    """
    C, k = cfgs.shape
    if k <= MAX_PERM_K:
        perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
        return kernels.config_distances(cfgs, dmat, perms)
    D = np.zeros((C, C))
    for a in range(C):
        for b in range(a + 1, C):
            A, B = _unshared(cfgs[a], cfgs[b])
            if len(A):
                sub = dmat[np.ix_(A, B)]
                rows, cols = linear_sum_assignment(sub)
                D[a, b] = D[b, a] = sub[rows, cols].sum()
    return D


def _unshared(a, b):
    """Multiset differences a - b and b - a of two sorted id rows."""
    ca, cb = Counter(a.tolist()), Counter(b.tolist())
    return list((ca - cb).elements()), list((cb - ca).elements())


class WorkFunction(FiniteAlgorithm):
    """Work function algorithm.

    k-server tables range over k-subsets of points, which suffices because a
    lazy optimum never stacks servers; taxis (and k-server starts with stacked
    servers) need k-multisets since a ride may end on an occupied point.
    Chasing runs the metrical-task-system work function over single points.
    """

    name = "wfa"

    def __init__(self, problem, dmat, initial, max_configs=MAX_CONFIGS):
        super().__init__(problem, dmat, initial)
        n, k = self.n, self.k
        if self.problem is Problem.CHASING:
            self.w = self.dmat[self.config[0]].copy()
            return
        self.multiset = self.problem is Problem.KTAXI or len(set(self.config.tolist())) < k
        combos = itertools.combinations_with_replacement if self.multiset else itertools.combinations
        count = math.comb(n + k - 1, k) if self.multiset else math.comb(n, k)
        if count > max_configs:
            raise ValueError(f"work function table of {count} configurations exceeds {max_configs}")
        self.cfgs = np.array(list(combos(range(n), k)), dtype=np.int64).reshape(-1, k)
        self.index = {tuple(c): i for i, c in enumerate(self.cfgs.tolist())}
        rest = list(combos(range(n), k - 1))
        self.add = np.full((len(rest), n), -1, dtype=np.int64)
        for s, sub in enumerate(rest):
            for p in range(n):
                self.add[s, p] = self.index.get(tuple(sorted(sub + (p,))), -1)
        self.D = config_distance_table(self.cfgs, self.dmat)
        self.w = self.D[self._idx(self.config)].copy()

    @classmethod
    def table_size(cls, problem, n, k, stacked=False):
        if Problem.parse(problem) is Problem.CHASING:
            return n
        multi = stacked or Problem.parse(problem) is Problem.KTAXI
        return math.comb(n + k - 1, k) if multi else math.comb(n, k)

    def _idx(self, pos):
        return self.index[tuple(sorted(int(v) for v in pos))]

    def _column(self, p):
        col = self.add[:, p]
        return col[col >= 0]

    def _kserver(self, r):
        col = self._column(r)
        self.w = kernels.wfa_update(self.w, self.D, col, col)
        if r in self.config:
            return int(np.flatnonzero(self.config == r)[0])
        vals = [self.w[self._idx(np.where(np.arange(self.k) == i, r, self.config))]
                + self.dmat[self.config[i], r] for i in range(self.k)]
        return _argmin_tie(vals, self.dmat[self.config, r])

    def _ktaxi(self, a, b):
        self.w = kernels.wfa_update(self.w, self.D, self.add[:, a], self.add[:, b])
        vals = [self.w[self._idx(np.where(np.arange(self.k) == i, b, self.config))]
                + self.dmat[self.config[i], a] for i in range(self.k)]
        return _argmin_tie(vals, self.dmat[self.config, a])

    def _chase(self, ids):
        self.w = kernels.wfa_update(self.w, self.dmat, ids, ids)
        move = self.dmat[self.config[0], ids]
        return _argmin_tie(self.w[ids] + move, move)


class Marking(FiniteAlgorithm):
    """Randomized marking for k-server on a uniform metric."""

    name = "marking"

    def __init__(self, problem, dmat, initial, seed=0, rtol=1e-9):
        super().__init__(problem, dmat, initial)
        if self.problem is not Problem.KSERVER:
            raise ValueError("marking serves k-server requests only")
        off = self.dmat[~np.eye(self.n, dtype=bool)]
        if len(off) and off.max() - off.min() > rtol * off.max():
            raise ValueError("marking needs a uniform metric")
        self.rng = np.random.default_rng(seed)
        self.marked = np.zeros(self.k, dtype=bool)

    def _kserver(self, r):
        hit = np.flatnonzero(self.config == r)
        if len(hit):
            self.marked[hit[0]] = True
            return int(hit[0])
        if self.marked.all():
            self.marked[:] = False
        free = np.flatnonzero(~self.marked)
        i = int(free[self.rng.integers(len(free))])
        self.marked[i] = True
        return i


FINITE = {"greedy": Greedy, "wfa": WorkFunction, "marking": Marking}


def make_finite(name, problem, dmat, initial, seed=0):
    """Instantiate a finite algorithm by name; ``auto`` picks WFA when its table fits."""
    if name == "auto":
        problem = Problem.parse(problem)
        init = np.asarray(initial).ravel()
        size = WorkFunction.table_size(problem, len(dmat), len(init), len(set(init.tolist())) < len(init))
        name = "wfa" if size <= MAX_CONFIGS else "greedy"
    if name not in FINITE:
        raise ValueError(f"unknown finite algorithm {name!r}")
    if name == "marking":
        return Marking(problem, dmat, initial, seed=seed)
    return FINITE[name](problem, dmat, initial)


# ------------------------------------------------------------ continuous


class RawGreedy:
    """Greedy directly on the continuous requests (no net)."""

    def __init__(self, problem, space, initial):
        self.problem = Problem.parse(problem)
        self.space = space
        self.positions = np.array(initial, dtype=float).reshape(-1, space.dimension)
        self.ledger = CostLedger()
        self.label = "greedy"

    def step(self, req):
        dec = greedy_step(self.positions, req, self.problem, self.space)
        self.positions, cost = serve(self.problem, self.space, self.positions, dec, req)
        self.ledger.add(cost, 0.0, dec)
        return dec, cost


class ProjectionWrapper:
    """Serve continuous requests by simulating a finite algorithm on a net.

    Between requests every server sits on the net point the inner algorithm
    placed it on. A k-server request ``r`` is served by moving the chosen
    server to ``pi(r)``, on to ``r`` and back; a taxi runs empty to ``pi(a)``
    and on to ``a``, rides to ``b`` and parks at ``pi(b)``; the chasing server
    visits the chosen request point and returns to its projection. The ledger
    keeps the inner leg as movement and the excursion as detour, and
    ``ledger.initial`` holds the cost of moving the start onto the net.
    """

    def __init__(self, net, problem, initial, inner="auto", seed=0):
        self.net = net
        self.space = net.space
        self.problem = Problem.parse(problem)
        initial = np.asarray(initial, dtype=float).reshape(-1, self.space.dimension)
        ids, dist = project_many(net, initial)
        self.inner = inner if isinstance(inner, FiniteAlgorithm) else \
            make_finite(inner, self.problem, net.dmat, ids, seed=seed)
        self.ledger = CostLedger(initial=math.fsum(dist))
        self.label = f"wrapped:{self.inner.name}"

    @property
    def config_ids(self):
        return self.inner.config

    @property
    def positions(self):
        return self.net.points[self.inner.config]

    def _pi(self, pts):
        ids, _ = project_many(self.net, np.atleast_2d(pts))
        return ids

    def step(self, req):
        """Returns (decision, total step cost, detour cost)."""
        sp, P = self.space, self.net.points
        req = as_request(self.problem, req, sp)
        start = self.positions
        if self.problem is Problem.KSERVER:
            pid = int(self._pi(req)[0])
            dec, _ = self.inner.step(pid)
            leg = distance(sp, start[dec], P[pid])
            detour = distance(sp, P[pid], req) + distance(sp, req, P[pid])
        elif self.problem is Problem.KTAXI:
            pa, pb = (int(v) for v in self._pi(req))
            dec, _ = self.inner.step((pa, pb))
            leg = distance(sp, start[dec], P[pa])
            detour = distance(sp, P[pa], req[0]) + distance(sp, req[1], P[pb])
        else:
            ids = self._pi(req)
            dec, _ = self.inner.step(ids)
            leg = distance(sp, start[0], P[ids[dec]])
            detour = distance(sp, P[ids[dec]], req[dec]) + distance(sp, req[dec], P[ids[dec]])
        self.ledger.add(leg, detour, dec)
        return dec, leg + detour, detour


# -------------------------------------------------------------- ensemble


def sigma_grid(problem, k, sigma_floor=0.0):
    """Smoothness levels ``2^-2^i`` used by the unknown-sigma ensemble.

    k-server and chasing use ``i = 1 .. l-1`` with ``l = ceil(log2 k) + 1`` (a
    worst-case expert fills slot ``l``). k-taxi has no worst-case expert, so the
    grid runs until it reaches ``sigma_floor``, which must be positive.
    """
    problem = Problem.parse(problem)
    if problem is Problem.KTAXI:
        if not sigma_floor or sigma_floor <= 0:
            raise ValueError("k-taxi needs a positive lower bound on sigma")
        out, i = [], 1
        while True:
            s = 2.0 ** -(2**i)
            out.append(s)
            if s <= sigma_floor:
                return out
            i += 1
    ell = math.ceil(math.log2(k)) + 1 if k > 1 else 1
    return [2.0 ** -(2**i) for i in range(1, ell)]


def worst_case_sigma(k):
    ell = math.ceil(math.log2(k)) + 1 if k > 1 else 1
    return 2.0 ** -(2**ell)


def _fine_eta(problem, sigma, k, ball):
    eta = choose_eta(problem, sigma, k, ball.dimension, ball.radius)
    floor = 3.0 * ball.radius * MAX_FINE_NET ** (-1.0 / ball.dimension)
    return max(eta, floor)


def build_sigma_ensemble(problem, k, ball, initial, sigma=None, sigma_floor=0.0, inner="auto", seed=0):
    """Experts for the unknown-sigma combiner.

    Returns a list of ``(sigma_i, expert)`` pairs. With a known ``sigma`` the
    list holds a single wrapper. The worst-case slot (k-server, chasing) is a
    wrapper on a fine net, labelled with ``sigma_i = None``.
    """
    problem = Problem.parse(problem)
    if sigma is not None:
        net = build_eta_net(ball, choose_eta(problem, sigma, k, ball.dimension, ball.radius))
        return [(sigma, ProjectionWrapper(net, problem, initial, inner, seed))]
    out = []
    for i, s in enumerate(sigma_grid(problem, k, sigma_floor)):
        net = build_eta_net(ball, choose_eta(problem, s, k, ball.dimension, ball.radius))
        out.append((s, ProjectionWrapper(net, problem, initial, inner, seed + i)))
    if problem is not Problem.KTAXI:
        net = build_eta_net(ball, _fine_eta(problem, worst_case_sigma(k), k, ball))
        out.append((None, ProjectionWrapper(net, problem, initial, inner, seed + len(out))))
    return out


class Ensemble:
    """Run experts side by side and track one of them with :class:`BlumBurch`."""

    def __init__(self, experts, problem, space, diam, eps=1.0, seed=0):
        self.experts = list(experts)
        self.problem = Problem.parse(problem)
        self.space = space
        self.bb = BlumBurch(len(self.experts), diam, eps, rng=np.random.default_rng(seed))
        self.ledger = CostLedger(initial=self.experts[0].ledger.initial)
        self.switch_costs = []
        inner = sorted({e.label for e in self.experts})
        self.label = "ensemble[" + ",".join(inner) + "]"

    @property
    def positions(self):
        return self.experts[self.bb.active].positions

    def _switch(self, i, j):
        return switching_cost(self.problem, self.experts[i].positions, self.experts[j].positions, self.space)

    def step(self, req):
        costs = np.array([e.step(req)[1] for e in self.experts])
        before = self.bb.active
        active, incurred = self.bb.step(costs, self._switch)
        switch = self.bb.switches[-1][3] if active != before else 0.0
        self.switch_costs.append(switch)
        self.ledger.add(costs[before] + switch, 0.0, before)
        return active, incurred


def make_algorithm(name, problem, ball, k, initial, *, net=None, sigma=None, sigma_floor=0.0,
                   eps=1.0, seed=0):
    """Build an online algorithm for continuous requests from its config name.

    ``greedy`` runs on raw points. Bare ``wfa``, ``marking`` and ``auto`` need a
    finite metric, so they are wrapped on ``net``. ``wrapped:<inner>`` is the
    explicit form. ``ensemble:<inner>`` combines wrappers over the sigma grid
    (or a single wrapper when ``sigma`` is known and ``net`` is None).
    """
    problem = Problem.parse(problem)
    if name == "greedy":
        return RawGreedy(problem, ball.space, initial)
    if name.startswith("ensemble:"):
        inner = name.split(":", 1)[1]
        experts = build_sigma_ensemble(problem, k, ball, initial, sigma=sigma,
                                       sigma_floor=sigma_floor, inner=inner, seed=seed)
        return Ensemble([e for _, e in experts], problem, ball.space,
                        config_diameter(problem, k, ball.radius), eps, seed=seed)
    inner = name.split(":", 1)[1] if name.startswith("wrapped:") else name
    if inner not in ("auto", *FINITE):
        raise ValueError(f"unknown algorithm {name!r}")
    if net is None:
        if sigma is None:
            raise ValueError(f"{name!r} needs a net or a sigma to build one")
        net = build_eta_net(ball, choose_eta(problem, sigma, k, ball.dimension, ball.radius))
    return ProjectionWrapper(net, problem, initial, inner, seed)

