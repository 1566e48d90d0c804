"""Exact offline optima for k-server, k-taxi and chasing small sets."""

from dataclasses import dataclass

import numpy as np

from .flow import FlowNetwork, min_cost_flow
from .net import project_many
from .problems import Problem, replay

SCALE = 1e9


def _scaled(d):
    return np.rint(np.asarray(d) * SCALE).astype(np.int64)


def _chain_opt(space, starts, A, B):
    """Cover requests ``j`` (pickup ``A[j]``, drop-off ``B[j]``) with ``k`` chains.

    Node layout: source, k start nodes, then (in_j, out_j) per request, sink.
    A unit entering ``in_j`` must leave through ``out_j`` at cost ``-L``; ``L``
    exceeds any chain cost so every optimum covers every request. Returns the
    serving chain (start id) of each request.
    """
    k, T = len(starts), len(A)
    src, sink = 0, k + 1 + 2 * T
    node_in = k + 1 + 2 * np.arange(T)
    node_out = node_in + 1
    d_start = _scaled(space.pairwise(starts, A))            # (k, T)
    d_chain = _scaled(space.pairwise(B, A))                 # (T, T), [i, j] = d(b_i, a_j)
    big = int(max(d_start.max(initial=0), d_chain.max(initial=0)))
    L = (T + k + 1) * big + 1

    g = FlowNetwork(sink + 1)
    servers = np.arange(1, k + 1)
    g.add_arcs(src, servers, 1, 0)
    g.add_arcs(np.repeat(servers, T), np.tile(node_in, k), 1, d_start.ravel())
    g.add_arcs(servers, sink, 1, 0)
    g.add_arcs(node_in, node_out, 1, -L)
    iu, ju = np.triu_indices(T, k=1)
    g.add_arcs(node_out[iu], node_in[ju], 1, d_chain[iu, ju])
    g.add_arcs(node_out, sink, 1, 0)
    min_cost_flow(g, src, sink, k)

    used = (g.cap[1::2] > 0)
    nxt = np.full(g.n_nodes, -1, dtype=np.int64)
    nxt[g.tail[0::2][used]] = g.to[0::2][used]
    owner = np.full(T, -1, dtype=np.int64)
    for i in range(k):
        v = nxt[1 + i]
        while v != sink and v >= 0:
            j = (v - k - 1) // 2
            owner[j] = i
            v = nxt[nxt[v]]
    if np.any(owner < 0):
        raise RuntimeError("flow left a request uncovered")
    return owner


def opt_kserver(requests, k, initial, space):
    """Minimum total movement; returns (cost, decisions by server id)."""
    R = np.asarray(requests, dtype=float).reshape(-1, space.dimension)
    S = np.asarray(initial, dtype=float).reshape(-1, space.dimension)
    if len(R) == 0:
        raise ValueError("need at least one request")
    if len(S) != k:
        raise ValueError(f"initial configuration has {len(S)} servers, expected {k}")
    dec = _chain_opt(space, S, R, R)
    _, ledger = replay(Problem.KSERVER, space, S, list(R), dec)
    return ledger.total, dec.tolist()


def opt_ktaxi(requests, k, initial, space):
    """Minimum total empty-run cost; ``requests`` has shape (T, 2, m)."""
    Q = np.asarray(requests, dtype=float).reshape(-1, 2, space.dimension)
    S = np.asarray(initial, dtype=float).reshape(-1, space.dimension)
    if len(Q) == 0:
        raise ValueError("need at least one request")
    if len(S) != k:
        raise ValueError(f"initial configuration has {len(S)} taxis, expected {k}")
    dec = _chain_opt(space, S, Q[:, 0], Q[:, 1])
    _, ledger = replay(Problem.KTAXI, space, S, list(Q), dec)
    return ledger.total, dec.tolist()


def opt_chasing(requests, initial, space):
    """Dynamic program over chosen points; returns (cost, choice per step)."""
    if len(requests) == 0:
        raise ValueError("need at least one request")
    sets = [np.asarray(r, dtype=float).reshape(-1, space.dimension) for r in requests]
    if any(len(s) == 0 for s in sets):
        raise ValueError("request sets must be non-empty")
    prev = np.asarray(initial, dtype=float).reshape(1, space.dimension)
    D = np.zeros(1)
    back = []
    for s in sets:
        tot = D[:, None] + space.pairwise(prev, s)
        arg = np.argmin(tot, axis=0)
        back.append(arg)
        D = tot[arg, np.arange(len(s))]
        prev = s
    choice = [int(np.argmin(D))]
    for arg in back[:0:-1]:
        choice.append(int(arg[choice[-1]]))
    choice.reverse()
    _, ledger = replay(Problem.CHASING, space, initial, sets, choice)
    return ledger.total, choice


def solve(problem, requests, k, initial, space):
    """Dispatch to the matching oracle."""
    problem = Problem.parse(problem)
    if problem is Problem.KSERVER:
        return opt_kserver(requests, k, initial, space)
    if problem is Problem.KTAXI:
        return opt_ktaxi(requests, k, initial, space)
    return opt_chasing(requests, initial, space)


def belady_misses(initial, requests):
    """Fewest faults for paging over point ids (furthest-in-future eviction)."""
    T = len(requests)
    nxt_use = np.empty(T, dtype=np.int64)
    seen = {}
    for t in range(T - 1, -1, -1):
        nxt_use[t] = seen.get(requests[t], T)
        seen[requests[t]] = t
    cache = list(initial)
    next_of = {p: seen.get(p, T) for p in cache}
    misses = 0
    for t, r in enumerate(requests):
        if r not in cache:
            misses += 1
            victim = max(range(len(cache)), key=lambda i: (next_of[cache[i]], -i))
            cache[victim] = r
        next_of = {p: (nxt_use[t] if p == r else next_of[p]) for p in cache}
    return misses


def opt_uniform(initial, requests, unit):
    """Exact k-server optimum on a uniform metric with pairwise distance ``unit``."""
    return unit * belady_misses(list(initial), list(requests))


@dataclass
class ProjectionReport:
    T: int
    eta: float
    opt_original: float
    shadow: float
    opt_net: float
    tolerance: float

    @property
    def shadow_ok(self):
        return self.shadow <= self.opt_original + 2.0 * self.eta * self.T + self.tolerance

    @property
    def net_ok(self):
        return self.opt_net <= self.shadow + self.tolerance

    @property
    def ok(self):
        return self.shadow_ok and self.net_ok


def _project_request(problem, net, req):
    pts = np.atleast_2d(np.asarray(req, dtype=float))
    ids, _ = project_many(net, pts)
    out = net.points[ids]
    return out[0] if problem is Problem.KSERVER else out


def opt_projected_vs_original(problem, requests, k, initial, net, opt=None):
    """Compare the original optimum, its projected shadow, and the optimum on the net.

    The shadow replays the original optimal decisions on projected requests
    from the projected start. ``tolerance`` covers the integer rounding inside
    the flow solver, which may leave an oracle up to half a nanounit per arc
    above the true optimum.
    """
    problem = Problem.parse(problem)
    space = net.space
    initial = np.asarray(initial, dtype=float).reshape(-1, space.dimension)
    if opt is None:
        opt = solve(problem, requests, k, initial, space)
    opt_cost, decisions = opt
    proj_reqs = [_project_request(problem, net, r) for r in requests]
    proj_init = _project_request(Problem.CHASING, net, initial)
    _, shadow = replay(problem, space, proj_init, proj_reqs, decisions)
    opt_net, _ = solve(problem, proj_reqs, k, proj_init, space)
    T = len(requests)
    return ProjectionReport(T, net.eta, opt_cost, shadow.total, opt_net, (2 * T + k + 2) / SCALE)

