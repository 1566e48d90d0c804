"""Normed-space geometry: norms, balls, finite metrics."""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class Norm(enum.Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @property
    def code(self):
        return {Norm.L1: kernels.L1, Norm.L2: kernels.L2, Norm.LINF: kernels.LINF}[self]

    @classmethod
    def parse(cls, name):
        if isinstance(name, Norm):
            return name
        key = str(name).strip().lower().replace("∞", "inf")
        aliases = {"l1": cls.L1, "1": cls.L1, "l2": cls.L2, "2": cls.L2,
                   "linf": cls.LINF, "inf": cls.LINF, "max": cls.LINF}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown norm {name!r}") from None


@dataclass(frozen=True)
class NormedSpace:
    dimension: int
    norm: Norm = Norm.L2

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension!r}")
        object.__setattr__(self, "norm", Norm.parse(self.norm))

    def point(self, x):
        """Coerce ``x`` to a float vector of this space's dimension."""
        p = np.asarray(x, dtype=float).reshape(-1)
        if p.shape[0] != self.dimension:
            raise ValueError(f"expected a point of dimension {self.dimension}, got {p.shape[0]}")
        return p

    def norm_of(self, v):
        v = np.asarray(v, dtype=float)
        return float(kernels.row_norms(v.reshape(-1, self.dimension), self.norm.code)[0])

    def distances(self, X, y):
        """Distances from each row of ``X`` to ``y``."""
        X = np.asarray(X, dtype=float).reshape(-1, self.dimension)
        return kernels.row_norms(X - self.point(y), self.norm.code)

    def pairwise(self, X, Y=None):
        X = np.asarray(X, dtype=float).reshape(-1, self.dimension)
        Y = X if Y is None else np.asarray(Y, dtype=float).reshape(-1, self.dimension)
        return kernels.row_norms(X[:, None, :] - Y[None, :, :], self.norm.code)

    def unit_ball_volume(self):
        m = self.dimension
        if self.norm is Norm.LINF:
            return 2.0**m
        if self.norm is Norm.L1:
            return 2.0**m / math.factorial(m)
        return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def distance(space, x, y):
    """Norm distance between ``x`` and ``y``."""
    x = space.point(x)
    y = space.point(y)
    return float(kernels.row_norms((x - y)[None, :], space.norm.code)[0])


@dataclass(frozen=True)
class Ball:
    space: NormedSpace
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in self.space.point(self.center))
        object.__setattr__(self, "center", c)
        if not self.radius >= 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius!r}")
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def centered(cls, dimension, norm="l2", radius=1.0, center=None):
        space = NormedSpace(dimension, norm)
        return cls(space, tuple(np.zeros(dimension)) if center is None else center, radius)

    @property
    def dimension(self):
        return self.space.dimension

    @property
    def center_array(self):
        return np.array(self.center)

    def contains(self, x):
        return distance(self.space, x, self.center) <= self.radius

    def contains_all(self, X):
        return bool(np.all(self.space.distances(X, self.center) <= self.radius))

    def volume(self):
        return self.space.unit_ball_volume() * self.radius**self.dimension

    def sample_uniform(self, rng, n=None):
        """Uniform sample(s) from the ball; shape ``(m,)`` or ``(n, m)``."""
        single = n is None
        n = 1 if single else int(n)
        m = self.dimension
        out = np.empty((n, m))
        filled = 0
        while filled < n:
            need = n - filled
            if self.space.norm is Norm.LINF:
                u = rng.uniform(-1.0, 1.0, size=(need, m))
            elif self.space.norm is Norm.L2:
                g = rng.standard_normal((need, m))
                g /= np.sqrt((g * g).sum(axis=1))[:, None]
                u = g * rng.random(need)[:, None] ** (1.0 / m)
            else:
                # Dirichlet(1,...,1) on m+1 coordinates, drop the slack, random signs
                e = rng.exponential(size=(need, m + 1))
                u = e[:, :m] / e.sum(axis=1)[:, None]
                u *= rng.choice([-1.0, 1.0], size=(need, m))
            pts = self.center_array + self.radius * u
            ok = self.space.distances(pts, self.center) <= self.radius
            pts = pts[ok]
            out[filled:filled + len(pts)] = pts
            filled += len(pts)
        return out[0] if single else out


@dataclass
class FiniteMetric:
    points: np.ndarray
    space: NormedSpace
    _dmat: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, self.space.dimension)
        if len(np.unique(self.points, axis=0)) != len(self.points):
            raise ValueError("finite metric contains duplicate points")

    def __len__(self):
        return len(self.points)

    @property
    def dmat(self):
        if self._dmat is None:
            self._dmat = self.space.pairwise(self.points)
        return self._dmat

    def is_uniform(self, rtol=1e-9):
        n = len(self.points)
        if n < 2:
            return True
        off = self.dmat[~np.eye(n, dtype=bool)]
        return bool(off.max() - off.min() <= rtol * off.max())


def aspect_ratio(fm):
    """Largest pairwise distance over smallest non-zero pairwise distance."""
    if len(fm.points) < 2:
        raise ValueError("aspect ratio needs at least two points")
    d = fm.dmat[np.triu_indices(len(fm.points), k=1)]
    d = d[d > 0]
    return float(d.max() / d.min())
