"""Scenario configs, seeded trials, sweeps and CSV output.

A scenario file is flat ``key = value`` text with ``#`` comments::

    problem = kserver
    k = 2
    m = 1
    norm = l2
    radius = 1.0
    generator = perturbed      # uniform | perturbed | hypercube | scripted
    rho = 0.1
    algorithm = wrapped:wfa
    T = 2000
    seeds = 0, 1, 2

Rows are deterministic functions of (scenario, seed): every float is written
with ``repr`` and wall-clock runtime is only added when asked for.
"""

import csv
import hashlib
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .lowerbound import HypercubeInstance, offline_ffd_strategy
from .metric import Ball
from .net import build_eta_net, size_bound
from .offline import solve
from .online import Ensemble, ProjectionWrapper, make_algorithm
from .problems import Problem, replay
from .smoothing import Generator, GeneratorDescriptor, choose_eta, opt_amortized_bound, sigma_of_generator

OPT_EXACT_MAX_T = 3000
WORKERS_ENV = "SMOOTHSERVE_WORKERS"
AXES = ("sigma", "k", "T", "m")


class ConfigError(ValueError):
    """Raised for scenario files that cannot be run as written."""


@dataclass(frozen=True)
class Scenario:
    problem: str = "kserver"
    k: int = 2
    m: int = 1
    norm: str = "l2"
    radius: float = 1.0
    center: tuple = None
    generator: str = "uniform"
    rho: float = None
    schedule: str = "cycle"
    trace: str = None
    sigma: float = None
    sigma_mode: str = "known"
    sigma_floor: float = 0.0
    algorithm: str = "wrapped:auto"
    T: int = 1000
    seeds: tuple = (0,)
    burn_in: int = 0
    eps: float = 1.0
    opt_fallback: str = "ffd"
    label: str = ""

    def __post_init__(self):
        try:
            Problem.parse(self.problem)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not 0 <= self.burn_in < self.T:
            raise ConfigError("burn_in must lie in [0, T)")
        if self.sigma_mode not in ("known", "unknown"):
            raise ConfigError("sigma_mode must be 'known' or 'unknown'")
        if self.opt_fallback not in ("ffd", "none"):
            raise ConfigError("opt_fallback must be 'ffd' or 'none'")

    def lines(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{f.name} = {v}")
        return out

    @property
    def hash(self):
        body = "\n".join(line for line in self.lines() if not line.startswith("seeds "))
        return hashlib.sha256(body.encode()).hexdigest()[:12]


_CASTS = {f.name: f.type for f in fields(Scenario)}


def _cast(key, text):
    kind = _CASTS[key]
    if kind is tuple:
        items = [x.strip() for x in text.split(",") if x.strip()]
        return tuple(int(x) for x in items) if key == "seeds" else tuple(float(x) for x in items)
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def parse_config(text):
    """Scenario from flat ``key = value`` text."""
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"line {n}: expected 'key = value'")
        if key not in _CASTS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        try:
            values[key] = _cast(key, val)
        except ValueError:
            raise ConfigError(f"line {n}: bad value for {key}: {val!r}") from None
    return Scenario(**values)


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


ROW_FIELDS = (
    "scenario", "seed", "problem", "k", "m", "norm", "generator", "algorithm", "a_n", "T",
    "burn_in", "sigma", "eta", "net_size", "size_bound", "online_cost", "inner_cost", "detours",
    "initial_projection", "opt_cost", "opt_kind", "ratio", "opt_per_request", "opt_bound",
    "switches", "switch_cost", "log_k_over_sigma",
)


@dataclass
class ResultRow:
    values: dict = field(default_factory=dict)
    runtime: float = None

    def __getitem__(self, key):
        return self.values[key]

    def cells(self, timing=False):
        out = [_fmt(self.values.get(f)) for f in ROW_FIELDS]
        if timing:
            out.append(_fmt(self.runtime))
        return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _ball(sc):
    if sc.generator == "hypercube":
        return HypercubeInstance(sc.k).ball
    center = sc.center if sc.center is not None else tuple(np.zeros(sc.m))
    try:
        return Ball.centered(sc.m, sc.norm, sc.radius, center)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _descriptor(sc):
    params = {"k": sc.k}
    if sc.sigma is not None:
        params["sigma"] = sc.sigma
    try:
        return GeneratorDescriptor(sc.generator, sc.problem, rho=sc.rho, schedule=sc.schedule,
                                   trace=sc.trace, params=params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _certificate(sc, desc, ball):
    if sc.generator == "scripted":
        if sc.sigma is None:
            raise ConfigError("scripted generators need an explicit 'sigma' key for eta selection")
        return sc.sigma
    try:
        return sigma_of_generator(desc, ball, sc.k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _algorithm(sc, problem, ball, sigma, initial, seed):
    name = sc.algorithm
    if sc.generator == "hypercube" and not name.startswith("ensemble:") and name != "greedy":
        inst = HypercubeInstance(sc.k)
        return make_algorithm(name, problem, ball, sc.k, initial, net=inst.vertex_net(), seed=seed)
    if name.startswith("ensemble:"):
        known = sigma if sc.sigma_mode == "known" else None
        return make_algorithm(name, problem, ball, sc.k, initial, sigma=known,
                              sigma_floor=sc.sigma_floor, eps=sc.eps, seed=seed)
    if name == "greedy":
        return make_algorithm(name, problem, ball, sc.k, initial)
    eta = choose_eta(problem, sigma, sc.k, ball.dimension, ball.radius)
    return make_algorithm(name, problem, ball, sc.k, initial, net=build_eta_net(ball, eta), seed=seed)


def _opt(sc, problem, ball, requests, initial):
    if problem is Problem.CHASING or sc.T <= OPT_EXACT_MAX_T:
        cost, dec = solve(problem, requests, sc.k, initial, ball.space)
        return cost, dec, "exact"
    if sc.generator == "hypercube" and sc.opt_fallback == "ffd":
        cost, dec = offline_ffd_strategy(HypercubeInstance(sc.k), requests, problem, initial)
        return cost, dec, "upper_bound"
    if sc.opt_fallback == "none":
        return None, None, "none"
    raise ConfigError(f"exact OPT is limited to T <= {OPT_EXACT_MAX_T} and no fallback applies "
                      "(set opt_fallback = none to skip OPT)")


def run_trial(sc, seed):
    """One seeded run of ``sc``; see :data:`ROW_FIELDS` for the columns."""
    t0 = time.perf_counter()
    problem = Problem.parse(sc.problem)
    ball = _ball(sc)
    desc = _descriptor(sc)
    sigma = _certificate(sc, desc, ball)
    req_seq, alg_seq = np.random.SeedSequence(int(seed)).spawn(2)
    gen = Generator(desc, ball, sc.k)
    try:
        requests = gen.stream(sc.T, np.random.default_rng(req_seq))
        initial = gen.initial
        alg = _algorithm(sc, problem, ball, sigma, initial, int(alg_seq.generate_state(1)[0]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for r in requests:
        alg.step(r)

    led = alg.ledger
    online = led.total if sc.burn_in == 0 else led.total_after(sc.burn_in)
    opt_cost, opt_dec, opt_kind = _opt(sc, problem, ball, requests, initial)
    if opt_cost is not None and sc.burn_in:
        _, opt_led = replay(problem, ball.space, initial, requests, opt_dec)
        opt_cost = opt_led.total_after(sc.burn_in)
    span = sc.T - sc.burn_in

    eta = net_size = bound = None
    if isinstance(alg, ProjectionWrapper):
        eta, net_size = alg.net.eta, len(alg.net)
        bound = size_bound(ball.radius, eta, ball.dimension) if eta <= ball.radius else 1.0
    elif isinstance(alg, Ensemble):
        net_size = sum(len(e.net) for e in alg.experts)
    values = {
        "scenario": sc.hash, "seed": int(seed), "problem": problem.value, "k": sc.k,
        "m": ball.dimension, "norm": ball.space.norm.value, "generator": sc.generator,
        "algorithm": sc.algorithm, "a_n": alg.label, "T": sc.T, "burn_in": sc.burn_in,
        "sigma": sigma, "eta": eta, "net_size": net_size, "size_bound": bound,
        "online_cost": online,
        "inner_cost": alg.inner.ledger.total if isinstance(alg, ProjectionWrapper) and not sc.burn_in else None,
        "detours": None if isinstance(alg, Ensemble) else led.detours, "initial_projection": led.initial,
        "opt_cost": opt_cost, "opt_kind": opt_kind,
        "ratio": _ratio(online, opt_cost),
        "opt_per_request": opt_cost / span if opt_cost is not None else None,
        "opt_bound": opt_amortized_bound(problem, sigma, sc.k, ball.dimension, ball.radius)
        if sigma and 0 < sigma <= 1 else None,
        "switches": len(alg.bb.switches) if isinstance(alg, Ensemble) else None,
        "switch_cost": math.fsum(alg.switch_costs) if isinstance(alg, Ensemble) else None,
        "log_k_over_sigma": math.log(sc.k / sigma) if sigma else None,
    }
    return ResultRow(values, time.perf_counter() - t0)


def _ratio(online, opt):
    if opt is None:
        return None
    return online / opt if opt > 0 else math.inf


def _trial(args):
    return run_trial(*args)


def workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer") from None


def run_many(tasks):
    """Rows for ``(scenario, seed)`` tasks, in task order."""
    n = workers()
    if n == 1 or len(tasks) <= 1:
        return [run_trial(sc, seed) for sc, seed in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_trial, tasks))


def run_scenario(sc):
    return run_many([(sc, s) for s in sorted(sc.seeds)])


def with_axis(sc, axis, value):
    """Copy of ``sc`` with one sweep axis set."""
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")
    if axis == "k":
        return replace(sc, k=int(value))
    if axis == "T":
        return replace(sc, T=int(value))
    if axis == "m":
        return replace(sc, m=int(value), center=None)
    sigma = float(value)
    if not 0 < sigma <= 1:
        raise ConfigError(f"sigma values must lie in (0, 1], got {value!r}")
    if sc.generator == "hypercube":
        raise ConfigError("the hypercube instance fixes its own sigma")
    if sc.generator == "scripted":
        return replace(sc, sigma=sigma)
    if sigma == 1.0:
        return replace(sc, generator="uniform", rho=None)
    return replace(sc, generator="perturbed", rho=sc.radius * sigma ** (1.0 / sc.m))


def sweep(sc, axis, values):
    """Rows for every (value, seed), sorted by axis value then seed."""
    cast = float if axis == "sigma" else int
    try:
        pairs = sorted((cast(v), s) for v in values for s in sc.seeds)
    except ValueError as exc:
        raise ConfigError(f"bad {axis} value: {exc}") from None
    tasks = [(with_axis(sc, axis, v), s) for v, s in pairs]
    return run_many(tasks), [v for v, _ in pairs]


def rows_to_csv(rows, timing=False, axis=None, axis_values=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = list(ROW_FIELDS) + (["runtime"] if timing else [])
    if axis:
        head = [f"axis_{axis}"] + head
    w.writerow(head)
    for i, row in enumerate(rows):
        cells = row.cells(timing)
        if axis:
            cells = [_fmt(axis_values[i])] + cells
        w.writerow(cells)
    return buf.getvalue()


def dict_rows_to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()

