"""Eta-nets of a ball: greedy construction, projection, certification.

The default candidate stream is a hierarchical lattice. Level 0 is an
axis-aligned lattice of spacing eta/2 (eta/(2 sqrt m) under L2) clipped to the
ball, so the first pass is plain greedy insertion over that lattice. A lattice
cell whose every point is provably within eta of the current net (nearest
distance at the cell center plus the cell radius is at most eta) is done;
otherwise its 2^m sub-cell centers are appended to the stream. Insertion is
always the greedy rule: add a candidate iff it lies in the ball and is more
than eta from every net point, so the result is eta-separated by construction.
When refinement ends with no uncertified cells, density holds over the whole
ball, not just on samples.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._accel import USE_NUMBA
from .metric import Ball, Norm, NormedSpace

MAX_REFINE_LEVELS = 10
CELL_BUDGET = 6_000_000
MAX_BUCKETS = 50_000_000


def size_bound(radius, eta, m):
    """Packing bound (3R/eta)^m on the size of an eta-net of a radius-R ball."""
    return (3.0 * radius / eta) ** m


def _cell_radius(side, m, norm):
    half = np.full((1, m), side / 2.0)
    return float(kernels.row_norms(half, norm.code)[0]) * (1.0 + 1e-12)


def lattice_spacing(eta, m, norm):
    return eta / (2.0 * math.sqrt(m)) if Norm.parse(norm) is Norm.L2 else eta / 2.0


def lattice_candidates(ball, eta):
    """Level-0 lattice over the ball's bounding box; returns (points, spacing)."""
    m = ball.dimension
    h = lattice_spacing(eta, m, ball.space.norm)
    R = ball.radius
    n = max(1, int(math.ceil(2.0 * R / h)))
    # keep eta off integer multiples of the spacing: exact ties leave cells that
    # can never be certified and only burn refinement budget
    while abs(eta * n / (2.0 * R) - round(eta * n / (2.0 * R))) < 1e-6:
        n += 1
    axes = [np.linspace(c - R, c + R, n + 1) for c in ball.center]
    grid = np.array(list(itertools.product(*axes))) if m <= 3 else \
        np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    return grid, 2.0 * R / n


class _Buckets:
    """Linf cells of side ~eta holding net-point linked lists."""

    def __init__(self, ball, eta, capacity):
        m = ball.dimension
        self.side = eta * (1.0 + 1e-9)
        self.lo = ball.center_array - ball.radius - eta
        self.G = int(math.ceil((2.0 * ball.radius + 2.0 * eta) / self.side)) + 1
        if self.G**m > MAX_BUCKETS:
            raise ValueError(f"bucket grid of {self.G}^{m} cells is too large")
        self.head = np.full(self.G**m, -1, dtype=np.int64)
        self.nxt = np.full(capacity, -1, dtype=np.int64)
        self.offsets = np.array(list(itertools.product((-1, 0, 1), repeat=m)), dtype=np.int64)

    def key(self, x):
        b = np.clip(np.floor((np.asarray(x) - self.lo) / self.side).astype(np.int64), 0, self.G - 1)
        return b

    def fill(self, points):
        for i, p in enumerate(points):
            flat = int(np.dot(self.key(p), self.G ** np.arange(len(p))))
            self.nxt[i] = self.head[flat]
            self.head[flat] = i


@dataclass
class Net:
    ball: Ball
    eta: float
    points: np.ndarray
    stats: dict = field(default_factory=dict)
    _buckets: object = field(default=None, init=False, repr=False)

    def __len__(self):
        return len(self.points)

    @property
    def space(self):
        return self.ball.space

    @property
    def size_bound(self):
        return size_bound(self.ball.radius, self.eta, self.ball.dimension)

    @property
    def dmat(self):
        if "_dmat" not in self.stats:
            self.stats["_dmat"] = self.space.pairwise(self.points)
        return self.stats["_dmat"]

    def buckets(self):
        if self._buckets is None:
            self._buckets = _Buckets(self.ball, self.eta, len(self.points))
            self._buckets.fill(self.points)
        return self._buckets


def build_eta_net(ball, eta, candidates=None, max_levels=MAX_REFINE_LEVELS, budget=CELL_BUDGET):
    """Greedy eta-net of ``ball``.

    ``candidates`` overrides the hierarchical lattice with an explicit point
    stream (array of shape (count, m)); greedy insertion then runs over exactly
    that stream. With eta > R the net is the singleton {center}.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta!r}")
    m = ball.dimension
    code = ball.space.norm.code
    if eta > ball.radius:
        return Net(ball, float(eta), ball.center_array[None, :].copy(),
                   {"singleton": True, "candidates": 0, "residual_cells": 0, "levels": 0})

    if candidates is not None:
        cands = np.asarray(candidates, dtype=float).reshape(-1, m)
        if len(cands) == 0:
            raise ValueError("empty candidate stream")
        if not ball.contains_all(cands):
            raise ValueError("candidate stream leaves the ball")
        buf = np.empty_like(cands)
        n = kernels.greedy_insert(cands, float(eta), code, buf, 0)
        return Net(ball, float(eta), buf[:n].copy(),
                   {"singleton": False, "candidates": len(cands), "residual_cells": 0, "levels": 0})

    cap = int((2.0 * ball.radius / eta + 1.0) ** m) + 2
    buf = np.empty((cap, m))
    centers, side = lattice_candidates(ball, eta)
    c0 = ball.center_array
    R = ball.radius
    n = 0
    examined = 0
    resid = 0
    level = 0
    buckets = _Buckets(ball, eta, cap) if USE_NUMBA else None
    while True:
        last = level >= max_levels
        rq = _cell_radius(side, m, ball.space.norm)
        if buckets is not None:
            n, kids, r = kernels._refine_level_nb(
                centers, side, rq, float(eta), code, c0, R, buf, n, buckets.head, buckets.nxt,
                buckets.lo, buckets.side, buckets.G, buckets.offsets, last)
        else:
            n, kids, r = kernels._refine_level_np(centers, side, rq, float(eta), code, c0, R, buf, n, last)
        examined += len(centers)
        resid += r
        if len(kids) == 0:
            break
        if examined + len(kids) > budget:
            resid += len(kids)
            break
        centers = kids
        side /= 2.0
        level += 1
    return Net(ball, float(eta), buf[:n].copy(),
               {"singleton": False, "candidates": examined, "residual_cells": resid, "levels": level + 1})


def project_many(net, X, method="brute"):
    """Net ids (and distances) of the points in ``X``; ties go to the lowest id."""
    X = np.asarray(X, dtype=float).reshape(-1, net.ball.dimension)
    code = net.space.norm.code
    if method == "brute":
        return kernels.nearest(net.points, X, code)
    if method != "grid":
        raise ValueError(f"unknown projection method {method!r}")
    b = net.buckets()
    if USE_NUMBA:
        return kernels._bucket_project_nb(net.points, X, b.head, b.nxt, b.lo, b.side, b.G,
                                          b.offsets, code, net.eta)
    return _grid_project_np(net, X, b, code)


def _grid_project_np(net, X, b, code):
    ids = np.empty(len(X), dtype=np.int64)
    out = np.empty(len(X))
    powers = b.G ** np.arange(X.shape[1])
    for q, x in enumerate(X):
        base = b.key(x)
        cand = []
        for off in b.offsets:
            cell = base + off
            if np.any(cell < 0) or np.any(cell >= b.G):
                continue
            j = b.head[int(np.dot(cell, powers))]
            while j >= 0:
                cand.append(j)
                j = b.nxt[j]
        best, arg = np.inf, -1
        if cand:
            cand = np.sort(np.array(cand))
            d = kernels.row_norms(net.points[cand] - x, code)
            a = int(np.argmin(d))
            best, arg = d[a], int(cand[a])
        if best > net.eta:
            i, d = kernels._nearest_np(net.points, x[None, :], code)
            best, arg = d[0], int(i[0])
        ids[q] = arg
        out[q] = best
    return ids, out


def project(net, x, method="brute"):
    """Id of the net point that ``x`` projects to."""
    x = net.space.point(x)
    if not net.ball.contains(x):
        raise ValueError("point lies outside the net's ball")
    ids, _ = project_many(net, x[None, :], method)
    return int(ids[0])


@dataclass
class NetReport:
    separated: bool
    dense: bool
    size_ok: bool
    max_projection_distance: float
    min_separation: float
    size: int
    n_test: int

    @property
    def ok(self):
        return self.separated and self.dense and self.size_ok


def verify_net(net, test_points=None, n_test=100_000, seed=0):
    """Check separation (all pairs), density (on test points) and the size bound."""
    if test_points is None:
        test_points = net.ball.sample_uniform(np.random.default_rng(seed), n_test)
    X = np.asarray(test_points, dtype=float).reshape(-1, net.ball.dimension)
    code = net.space.norm.code
    if len(net.points) >= 2:
        sep, _, _ = kernels.min_pair(net.points, code)
    else:
        sep = math.inf
    if len(X):
        _, d = project_many(net, X, "grid" if USE_NUMBA else "brute")
        worst = float(d.max())
    else:
        worst = 0.0
    return NetReport(
        separated=bool(sep > net.eta),
        dense=bool(worst <= net.eta),
        size_ok=len(net.points) <= math.ceil(net.size_bound),
        max_projection_distance=worst,
        min_separation=float(sep),
        size=len(net.points),
        n_test=len(X),
    )


def net_from_points(ball, eta, points):
    """Wrap an explicit point set (e.g. the hypercube vertices) as a net."""
    pts = np.asarray(points, dtype=float).reshape(-1, ball.dimension)
    return Net(ball, float(eta), pts.copy(), {"singleton": len(pts) == 1, "candidates": 0,
                                               "residual_cells": 0, "levels": 0, "explicit": True})


def write_net(net, path):
    with open(path, "w") as fh:
        fh.write(f"# eta={net.eta!r}\n")
        fh.write(f"# radius={net.ball.radius!r}\n")
        fh.write(f"# m={net.ball.dimension}\n")
        fh.write(f"# norm={net.space.norm.value}\n")
        fh.write("# center=" + ",".join(repr(c) for c in net.ball.center) + "\n")
        for p in net.points:
            fh.write(",".join(repr(float(v)) for v in p) + "\n")


def read_net(path):
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                header[key.strip()] = val.strip()
            else:
                rows.append([float(v) for v in line.split(",")])
    m = int(header["m"])
    ball = Ball(NormedSpace(m, header["norm"]), tuple(float(v) for v in header["center"].split(",")),
                float(header["radius"]))
    return Net(ball, float(header["eta"]), np.array(rows, dtype=float).reshape(-1, m), {"loaded": True})
