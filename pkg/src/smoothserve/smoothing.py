"""Smoothed request generators with analytic sigma certificates, plus the
per-request OPT bounds, the eta selector and the delta-separated diagnostic.

Generators are described declaratively by :class:`GeneratorDescriptor`:

``uniform``
    every request point uniform on the ball (sigma = 1);
``perturbed``
    points uniform on a radius-``rho`` ball around an adversarial base point.
    Base points stay in the inner ball of radius ``R - rho`` so the
    perturbation never clips, giving sigma = (rho/R)^m exactly. Base
    schedules: ``cycle`` walks k+1 fixed points, ``adaptive_far`` reflects the
    last realized request through the center;
``hypercube``
    the lower-bound instance on ``[0,1]^m`` (see :mod:`smoothserve.lowerbound`);
``scripted``
    replays a stored trace; it carries no certificate.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .metric import Ball
from .problems import Problem, read_trace

KINDS = ("uniform", "perturbed", "hypercube", "scripted")
SCHEDULES = ("cycle", "adaptive_far")


@dataclass(frozen=True)
class GeneratorDescriptor:
    kind: str
    problem: Problem = Problem.KSERVER
    rho: float = None
    schedule: str = "cycle"
    bases: tuple = None
    trace: str = None
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        object.__setattr__(self, "problem", Problem.parse(self.problem))
        if self.kind == "perturbed" and self.schedule not in SCHEDULES:
            raise ValueError(f"unknown base schedule {self.schedule!r}")
        if self.kind == "scripted" and not self.trace:
            raise ValueError("scripted generator needs a trace path")


def _check_sigma(sigma):
    if not (0.0 < sigma <= 1.0):
        raise ValueError(f"sigma must lie in (0, 1], got {sigma!r}")


def sigma_of_generator(desc, ball, k=None):
    """Certified smoothness of the generator on ``ball``."""
    if desc.kind == "scripted":
        raise ValueError("scripted generators carry no sigma certificate")
    if desc.kind == "uniform":
        return 1.0
    if desc.kind == "perturbed":
        rho = desc.rho
        if rho is None or not rho > 0:
            raise ValueError("perturbation radius must be positive")
        if rho > ball.radius:
            raise ValueError("perturbation ball does not fit inside the ball")
        return (rho / ball.radius) ** ball.dimension
    from .lowerbound import HypercubeInstance

    return HypercubeInstance(k if k is not None else desc.params["k"]).sigma


def opt_amortized_bound(problem, sigma, k, m, radius):
    """Per-request lower bound on the expected optimal cost."""
    _check_sigma(sigma)
    if Problem.parse(problem) is Problem.CHASING:
        return radius / 2.0 * (sigma / (2.0 * k * k)) ** (1.0 / m)
    return radius / 8.0 * (sigma / (8.0 * k)) ** (1.0 / m)


def separation_delta(problem, sigma, k, m, radius):
    """The delta of the OPT lower-bound argument."""
    _check_sigma(sigma)
    if Problem.parse(problem) is Problem.CHASING:
        return radius * (sigma / (2.0 * k * k)) ** (1.0 / m)
    return radius * (sigma / (8.0 * k)) ** (1.0 / m)


def choose_eta(problem, sigma, k, m, radius):
    """Net scale ``3 * delta``; an eta above the radius means a singleton net."""
    return 3.0 * separation_delta(problem, sigma, k, m, radius)


class Generator:
    """Stateful sampler for one descriptor on one ball."""

    def __init__(self, desc, ball, k):
        self.desc = desc
        self.ball = ball
        self.k = int(k)
        self.problem = desc.problem
        self.m = ball.dimension
        self._trace = None
        self._hyper = None
        if desc.kind == "perturbed":
            self.sigma = sigma_of_generator(desc, ball)
            self.inner = Ball(ball.space, ball.center, ball.radius - desc.rho)
            self.sub = Ball(ball.space, np.zeros(self.m), desc.rho)
            bases = desc.bases if desc.bases is not None else self._default_bases()
            self.bases = np.asarray(bases, dtype=float).reshape(-1, self.m)
            if not self.inner.contains_all(self.bases):
                raise ValueError("base point outside the inner ball")
        elif desc.kind == "hypercube":
            from .lowerbound import HypercubeInstance

            self._hyper = HypercubeInstance(self.k)
            self.sigma = self._hyper.sigma
        elif desc.kind == "scripted":
            self._trace = read_trace(desc.trace)
            self.sigma = desc.params.get("sigma")
        else:
            self.sigma = 1.0

    def _span(self):
        # a hair inside the inner ball so base + rho-perturbation never rounds out of the ball
        return (self.ball.radius - self.desc.rho) * (1.0 - 1e-12)

    def _default_bases(self):
        c = self.ball.center_array
        span = self._span()
        e = np.zeros(self.m)
        e[0] = 1.0
        steps = np.linspace(-1.0, 1.0, self.k + 1) if self.k > 0 else np.zeros(1)
        return c + span * steps[:, None] * e

    def _base(self, t, history, j=0):
        if self.desc.schedule == "cycle" or not history:
            return self.bases[(t + j) % len(self.bases)]
        last = np.atleast_2d(history[-1])[-1]
        c = self.ball.center_array
        v = c - last
        nv = self.ball.space.norm_of(v)
        if nv == 0.0:
            return self.bases[j % len(self.bases)]
        return c + self._span() * v / nv

    def _points(self, t, history, count, rng):
        if self.desc.kind == "uniform":
            return self.ball.sample_uniform(rng, count)
        out = np.empty((count, self.m))
        for j in range(count):
            out[j] = self._base(t, history, j) + self.sub.sample_uniform(rng)
        return out

    def sample(self, t, history, rng):
        """Request ``t`` given the realized ``history`` of earlier requests."""
        if self._trace is not None:
            return np.array(self._trace.requests[t % len(self._trace.requests)])
        if self._hyper is not None:
            return self._hyper.sample(self.problem, rng)
        if self.problem is Problem.KSERVER:
            return self._points(t, history, 1, rng)[0]
        if self.problem is Problem.KTAXI:
            return self._points(t, history, 2, rng)
        return self._points(t, history, self.k, rng)

    def stream(self, T, rng):
        history = []
        for t in range(T):
            history.append(self.sample(t, history, rng))
        return history

    @property
    def initial(self):
        """Start configuration.

        Stored traces and the hypercube bring their own; otherwise servers are
        spread along the first axis at half the radius (chasing starts at the
        center).
        """
        if self._trace is not None:
            return np.array(self._trace.initial)
        if self._hyper is not None:
            return self._hyper.initial(self.problem)
        return default_initial(self.problem, self.ball, self.k)


def default_initial(problem, ball, k):
    c = ball.center_array
    if Problem.parse(problem) is Problem.CHASING or k == 1:
        return c[None, :].copy()
    e = np.zeros(ball.dimension)
    e[0] = ball.radius / 2.0
    return c + np.linspace(-1.0, 1.0, k)[:, None] * e


def sample_request(desc, ball, k, history, rng):
    """One request drawn after ``history`` (functional form of :class:`Generator`)."""
    return Generator(desc, ball, k).sample(len(history), history, rng)


def delta_separated_growth(problem, window, delta, space, k=None):
    """Grow the delta-separated subset over a window of requests.

    k-server inserts ``r_i`` iff it is more than ``delta`` from every point kept
    so far. k-taxi inserts request ``i`` iff its pickup is more than ``delta``
    from the drop-off of every earlier request in the window. Returns
    ``(final size, per-step inserted flags)``.
    """
    problem = Problem.parse(problem)
    if problem is Problem.CHASING:
        raise ValueError("the growth diagnostic is defined for k-server and k-taxi")
    if k is not None and len(window) != 4 * k:
        raise ValueError(f"window must hold exactly 4k = {4 * k} requests")
    m = space.dimension
    log = []
    if problem is Problem.KSERVER:
        pts = np.asarray(window, dtype=float).reshape(-1, m)
        kept = np.empty((0, m))
        for r in pts:
            ok = bool(np.all(space.distances(kept, r) > delta)) if len(kept) else True
            if ok:
                kept = np.vstack([kept, r])
            log.append(ok)
        return len(kept), log
    pairs = np.asarray(window, dtype=float).reshape(-1, 2, m)
    size = 0
    for i, (a, _) in enumerate(pairs):
        ok = bool(np.all(space.distances(pairs[:i, 1], a) > delta)) if i else True
        size += ok
        log.append(ok)
    return size, log


def consecutive_close_fraction(sets_a, sets_b, delta, space):
    """Share of request pairs whose sets come within ``delta`` of each other."""
    hits = 0
    for A, B in zip(sets_a, sets_b):
        hits += bool(space.pairwise(A, B).min() <= delta)
    return hits / max(1, len(sets_a))


def empirical_cell_mass(samples, lo, hi):
    """Fraction of ``samples`` inside the axis-aligned box [lo, hi]."""
    X = np.asarray(samples, dtype=float)
    return float(np.mean(np.all((X >= lo) & (X <= hi), axis=1)))


def density_cap(cell_volume, sigma, ball):
    """Largest probability a sigma-smooth marginal may put on a cell."""
    return cell_volume / (sigma * ball.volume())


def harmonic(n):
    return math.fsum(1.0 / i for i in range(1, n + 1))
