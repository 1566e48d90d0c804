"""Expert combination: Hedge weights with a coupled lazy switching rule.

Each step the weight vector moves from ``p`` to ``p'`` by a multiplicative
update. The tracked expert ``a`` is kept with probability ``min(1, p'_a/p_a)``;
otherwise the new expert is drawn with probability proportional to
``max(0, p'_j - p_j)``. This coupling keeps the tracked expert distributed as
``p'`` while switching only with probability ``TV(p, p')``.

With per-step costs in ``[0, diam]`` and rate ``beta/diam``, expected cost is at
most ``(1+beta)beta/(1-e^-beta) * best + (1+beta)/(1-e^-beta) * diam * ln(l)``.
:func:`calibrate_beta` picks ``beta`` so the first factor equals ``1 + eps``;
for ``eps = 1`` the additive coefficient comes out near 3.68.
"""

import math

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .metric import distance
from .problems import Problem


def calibrate_beta(eps):
    """Solve ``(1+b) b / (1-exp(-b)) = 1 + eps`` for ``b > 0``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    f = lambda b: (1.0 + b) * b / -math.expm1(-b) - (1.0 + eps)  # noqa: E731
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    return brentq(f, 1e-12, hi, xtol=1e-14)


def additive_coefficient(eps):
    b = calibrate_beta(eps)
    return (1.0 + b) / -math.expm1(-b)


class BlumBurch:
    """Randomized tracking of one of ``n`` experts."""

    def __init__(self, n, diam, eps=1.0, rate=None, active=0, rng=None):
        if n < 1:
            raise ValueError("need at least one expert")
        if not diam > 0:
            raise ValueError("diam must be positive")
        self.n = int(n)
        self.diam = float(diam)
        self.eps = float(eps)
        self.rate = calibrate_beta(eps) / diam if rate is None else float(rate)
        self.active = int(active)
        self.logw = np.zeros(self.n)
        self.p = np.full(self.n, 1.0 / self.n)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.switches = []  # (step, from, to, cost)
        self.incurred = 0.0
        self.t = 0

    @property
    def weights(self):
        return self.p.copy()

    def update(self, costs, uniforms):
        """Apply one cost vector; ``uniforms`` are two draws in [0, 1)."""
        costs = np.asarray(costs, dtype=float)
        if costs.shape != (self.n,):
            raise ValueError(f"expected {self.n} expert costs, got shape {costs.shape}")
        self.logw -= self.rate * costs
        self.logw -= self.logw.max()
        q = np.exp(self.logw)
        q /= np.cumsum(q)[-1]
        p, a = self.p, self.active
        if q[a] < p[a] and uniforms[0] >= q[a] / p[a]:
            up = q > p
            acc = np.cumsum(np.where(up, q - p, 0.0))
            target = uniforms[1] * acc[-1]
            hit = np.flatnonzero(up & (target < acc))
            cand = hit[0] if len(hit) else np.flatnonzero(up)[-1]
            self.active = int(cand)
        self.p = q
        return self.active

    def step(self, costs, switch_cost=None):
        """Charge the tracked expert's cost, update, and pay for any switch.

        ``switch_cost(i, j)`` prices moving from expert ``i``'s configuration to
        ``j``'s; it defaults to ``diam``. Returns (active id, incurred cost).
        """
        before = self.active
        incurred = float(costs[before])
        self.update(costs, self.rng.random(2))
        if self.active != before:
            c = self.diam if switch_cost is None else float(switch_cost(before, self.active))
            self.switches.append((self.t, before, self.active, c))
            incurred += c
        self.incurred += incurred
        self.t += 1
        return self.active, incurred


def switching_cost(problem, A, B, space):
    """Minimum-cost matching distance between two configurations."""
    A = np.asarray(A, dtype=float).reshape(-1, space.dimension)
    B = np.asarray(B, dtype=float).reshape(-1, space.dimension)
    if len(A) != len(B):
        raise ValueError(f"configurations differ in size: {len(A)} vs {len(B)}")
    if Problem.parse(problem) is Problem.CHASING or len(A) == 1:
        return distance(space, A[0], B[0])
    D = space.pairwise(A, B)
    rows, cols = linear_sum_assignment(D)
    return float(D[rows, cols].sum())


def config_diameter(problem, k, radius):
    """Diameter of the configuration space used to scale the combiner."""
    if Problem.parse(problem) is Problem.CHASING:
        return 2.0 * radius
    return k * 2.0 * radius
