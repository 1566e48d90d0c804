"""Min-cost flow by successive shortest paths with node potentials.

Arc costs are integers. Networks passed to :func:`min_cost_flow` must be
numbered in topological order of their positive-capacity arcs (every arc goes
from a lower to a higher node id), which lets the initial potentials come from
one DAG relaxation pass even when some costs are negative. Later rounds run a
dense O(V^2) Dijkstra on reduced costs, which suits the dense request-chaining
networks built by the offline oracles.
"""

import numpy as np

from . import kernels


class FlowNetwork:
    """Residual network with paired arcs stored in CSR order."""

    def __init__(self, n_nodes):
        self.n_nodes = int(n_nodes)
        self._chunks = []
        self._count = 0
        self._frozen = False

    def add_arc(self, u, v, cap, cost):
        if int(cap) != cap or cap < 0:
            raise ValueError("capacities must be nonnegative integers")
        return int(self.add_arcs([u], [v], cap, cost)[0])

    def add_arcs(self, u, v, cap, cost):
        """Add forward arcs (and their zero-capacity reverses); returns forward arc ids."""
        if self._frozen:
            raise RuntimeError("network is frozen")
        u, v = np.broadcast_arrays(np.asarray(u, dtype=np.int64).ravel(), np.asarray(v, dtype=np.int64).ravel())
        if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= self.n_nodes):
            raise ValueError("arc references a missing node")
        cap = np.broadcast_to(np.asarray(cap, dtype=np.int64), u.shape)
        cost = np.broadcast_to(np.asarray(cost, dtype=np.int64), u.shape)
        if np.any(cap < 0):
            raise ValueError("capacities must be nonnegative integers")
        self._chunks.append((u.copy(), v.copy(), cap.copy(), cost.copy()))
        ids = 2 * (self._count + np.arange(u.size))
        self._count += u.size
        return ids

    def freeze(self):
        n = self._count
        self.tail = np.empty(2 * n, dtype=np.int64)
        self.to = np.empty(2 * n, dtype=np.int64)
        self.cap = np.zeros(2 * n, dtype=np.int64)
        self.cost = np.empty(2 * n, dtype=np.int64)
        at = 0
        for u, v, cap, cost in self._chunks:
            sl = slice(2 * at, 2 * (at + u.size), 2)
            sr = slice(2 * at + 1, 2 * (at + u.size), 2)
            self.tail[sl], self.to[sl], self.cap[sl], self.cost[sl] = u, v, cap, cost
            self.tail[sr], self.to[sr], self.cost[sr] = v, u, -cost
            at += u.size
        self._chunks = []
        self.adj = np.argsort(self.tail, kind="stable").astype(np.int64)
        self.start = np.searchsorted(self.tail[self.adj], np.arange(self.n_nodes + 1)).astype(np.int64)
        self._frozen = True
        return self

    @property
    def n_arcs(self):
        return self._count

    def is_topological(self):
        fwd = self.cap > 0
        return bool(np.all(self.tail[fwd] < self.to[fwd]))

    def flow_on(self, arc):
        """Units pushed along forward arc ``arc``."""
        return int(self.cap[arc ^ 1])


def min_cost_flow(net, source, sink, amount):
    """Push ``amount`` units from ``source`` to ``sink`` at minimum cost.

    Mutates the residual capacities of ``net``; returns the integer cost.
    Raises ValueError when the network cannot carry ``amount``.
    """
    if not net._frozen:
        net.freeze()
    if not net.is_topological():
        raise ValueError("network is not in topological order")
    n = net.n_nodes
    pot = kernels.dag_potentials(n, net.start, net.adj, net.to, net.cost, net.cap, source)
    pot = np.where(pot >= kernels.IINF, 0, pot)
    total = 0
    pushed = 0
    while pushed < amount:
        dist, par = kernels.dijkstra(n, net.start, net.adj, net.to, net.cost, net.cap, pot, source)
        if dist[sink] >= kernels.IINF:
            raise ValueError(f"network carries only {pushed} of {amount} units")
        reach = dist < kernels.IINF
        pot = np.where(reach, pot + dist, pot + dist[sink])
        # bottleneck along the path
        f = amount - pushed
        v = sink
        while v != source:
            e = par[v]
            f = min(f, int(net.cap[e]))
            v = net.to[e ^ 1]
        v = sink
        while v != source:
            e = par[v]
            net.cap[e] -= f
            net.cap[e ^ 1] += f
            total += f * int(net.cost[e])
            v = net.to[e ^ 1]
        pushed += f
    return total
