"""Problem semantics for k-server, k-taxi and chasing small sets.

Configurations are float arrays of shape ``(k, m)`` (a single row for
chasing). Requests are arrays too: ``(m,)`` for k-server, ``(2, m)`` holding
``(a, b)`` for k-taxi, and ``(j, m)`` with ``1 <= j <= k`` for chasing.
Decisions are integers: the id of the server or taxi that moves, or the index
into the request set for chasing. A k-server decision of ``-1`` means "no
move" and is legal only when some server already sits on the request.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .metric import NormedSpace, distance


class Problem(enum.Enum):
    KSERVER = "kserver"
    KTAXI = "ktaxi"
    CHASING = "chasing"

    @classmethod
    def parse(cls, name):
        if isinstance(name, Problem):
            return name
        key = str(name).strip().lower().replace("-", "").replace("_", "")
        aliases = {"kserver": cls.KSERVER, "server": cls.KSERVER, "ktaxi": cls.KTAXI,
                   "taxi": cls.KTAXI, "chasing": cls.CHASING, "chase": cls.CHASING,
                   "chasingsmallsets": cls.CHASING}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown problem {name!r}") from None


NO_MOVE = -1


def as_request(problem, payload, space, k=None):
    """Validate and coerce a request payload to its array form."""
    problem = Problem.parse(problem)
    m = space.dimension
    arr = np.asarray(payload, dtype=float)
    if problem is Problem.KSERVER:
        return space.point(arr)
    if problem is Problem.KTAXI:
        if arr.size != 2 * m:
            raise ValueError(f"taxi request needs two points of dimension {m}")
        return arr.reshape(2, m)
    arr = arr.reshape(-1, m)
    if len(arr) == 0:
        raise ValueError("chasing request must be non-empty")
    if k is not None and len(arr) > k:
        raise ValueError(f"chasing request has {len(arr)} points, more than k={k}")
    return arr


def _check_id(config, i, what):
    if not (0 <= int(i) < len(config)):
        raise ValueError(f"invalid {what} id {i!r} for {len(config)} {what}s")
    return int(i)


def serve_kserver(space, config, server_id, r):
    """Move server ``server_id`` onto ``r``; returns (new config, cost)."""
    config = np.asarray(config, dtype=float)
    i = _check_id(config, server_id, "server")
    r = space.point(r)
    cost = distance(space, config[i], r)
    new = config.copy()
    new[i] = r
    return new, cost


def serve_ktaxi(space, config, taxi_id, req):
    """Empty run to ``a``, free ride to ``b``; returns (new config, empty-run cost)."""
    config = np.asarray(config, dtype=float)
    i = _check_id(config, taxi_id, "taxi")
    a, b = np.asarray(req, dtype=float).reshape(2, space.dimension)
    cost = distance(space, config[i], a)
    new = config.copy()
    new[i] = b
    return new, cost


def serve_chase(space, config, choice, req):
    """Move the single server to ``req[choice]``; returns (new config, cost)."""
    config = np.asarray(config, dtype=float).reshape(1, space.dimension)
    pts = np.asarray(req, dtype=float).reshape(-1, space.dimension)
    if not (0 <= int(choice) < len(pts)):
        raise ValueError(f"choice {choice!r} out of range for a request of {len(pts)} points")
    target = pts[int(choice)]
    return target[None, :].copy(), distance(space, config[0], target)


def covering_server(config, r):
    """Lowest id of a server sitting exactly on ``r``, or None."""
    hit = np.flatnonzero(np.all(np.asarray(config) == np.asarray(r), axis=1))
    return int(hit[0]) if len(hit) else None


def serve(problem, space, config, decision, req):
    problem = Problem.parse(problem)
    if problem is Problem.KSERVER:
        if decision == NO_MOVE:
            if covering_server(config, req) is None:
                raise ValueError("no-move decision on an uncovered request")
            return np.array(config, dtype=float), 0.0
        return serve_kserver(space, config, decision, req)
    if problem is Problem.KTAXI:
        return serve_ktaxi(space, config, decision, req)
    return serve_chase(space, config, decision, req)


@dataclass(frozen=True)
class StepRecord:
    t: int
    movement: float
    detour: float = 0.0
    mover: int = NO_MOVE

    @property
    def cost(self):
        return self.movement + self.detour


@dataclass
class CostLedger:
    records: list = field(default_factory=list)
    initial: float = 0.0
    _total: float = 0.0

    def add(self, movement, detour=0.0, mover=NO_MOVE):
        if movement < 0 or detour < 0:
            raise ValueError("ledger costs must be nonnegative")
        rec = StepRecord(len(self.records), float(movement), float(detour), int(mover))
        self.records.append(rec)
        self._total += rec.cost
        return rec

    def __len__(self):
        return len(self.records)

    @property
    def movement(self):
        return math.fsum(r.movement for r in self.records)

    @property
    def detours(self):
        return math.fsum(r.detour for r in self.records)

    @property
    def total(self):
        return self.initial + math.fsum(r.cost for r in self.records)

    def total_after(self, burn_in):
        return math.fsum(r.cost for r in self.records[burn_in:])

    def step_costs(self):
        return np.array([r.cost for r in self.records])

    def consistent(self):
        tot = math.fsum(r.cost for r in self.records)
        return all(r.movement >= 0 and r.detour >= 0 for r in self.records) and \
            abs(self._total - tot) <= 1e-9 * max(1.0, abs(tot))


def replay(problem, space, initial, requests, decisions):
    """Serve ``requests`` with ``decisions``; returns (final config, ledger)."""
    problem = Problem.parse(problem)
    config = np.array(initial, dtype=float).reshape(-1, space.dimension)
    ledger = CostLedger()
    for req, dec in zip(requests, decisions):
        config, cost = serve(problem, space, config, int(dec), req)
        ledger.add(cost, 0.0, int(dec))
    return config, ledger


def validate_trace(problem, initial, requests, decisions, ledger, space):
    """True iff replaying ``decisions`` legally reproduces ``ledger`` exactly."""
    if len(requests) != len(decisions) or len(ledger.records) != len(decisions):
        return False
    try:
        _, fresh = replay(problem, space, initial, requests, decisions)
    except ValueError:
        return False
    for got, want in zip(ledger.records, fresh.records):
        if got.movement != want.movement or got.detour != 0.0 or got.mover != want.mover:
            return False
    return ledger.consistent()


# ------------------------------------------------------------- trace files


@dataclass
class Trace:
    problem: Problem
    space: NormedSpace
    k: int
    initial: np.ndarray
    requests: list
    decisions: list
    ledger: CostLedger
    radius: float = 1.0
    seed: int = 0
    opt_cost: float = None
    opt_decisions: list = None

    @classmethod
    def from_decisions(cls, problem, space, k, initial, requests, decisions, **kw):
        _, ledger = replay(problem, space, initial, requests, decisions)
        return cls(Problem.parse(problem), space, k, np.array(initial, dtype=float),
                   list(requests), list(decisions), ledger, **kw)

    def validate(self):
        return validate_trace(self.problem, self.initial, self.requests, self.decisions,
                              self.ledger, self.space)


def _fmt_points(arr):
    arr = np.asarray(arr, dtype=float).reshape(-1, np.asarray(arr).shape[-1])
    return ";".join(",".join(repr(float(v)) for v in row) for row in arr)


def _parse_points(text, m):
    return np.array([[float(v) for v in row.split(",")] for row in text.split(";")]).reshape(-1, m)


def write_trace(trace, path):
    with open(path, "w") as fh:
        fh.write(f"# problem={trace.problem.value}\n")
        fh.write(f"# k={trace.k}\n")
        fh.write(f"# m={trace.space.dimension}\n")
        fh.write(f"# norm={trace.space.norm.value}\n")
        fh.write(f"# radius={trace.radius!r}\n")
        fh.write(f"# seed={trace.seed}\n")
        fh.write(f"# initial={_fmt_points(trace.initial)}\n")
        for req, dec, rec in zip(trace.requests, trace.decisions, trace.ledger.records):
            fh.write(f"{_fmt_points(np.atleast_2d(req))}\t{int(dec)}\t{rec.movement!r}\n")
        if trace.opt_cost is not None:
            fh.write("[opt]\n")
            fh.write(f"cost={trace.opt_cost!r}\n")
            fh.write("decisions=" + ",".join(str(int(d)) for d in trace.opt_decisions) + "\n")


def read_trace(path):
    header, rows, opt = {}, [], {}
    section = "steps"
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.strip() == "[opt]":
                section = "opt"
            elif line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                header[key.strip()] = val.strip()
            elif section == "opt":
                key, _, val = line.partition("=")
                opt[key.strip()] = val.strip()
            else:
                rows.append(line.split("\t"))
    m = int(header["m"])
    problem = Problem.parse(header["problem"])
    space = NormedSpace(m, header["norm"])
    requests = []
    for payload, _, _ in rows:
        pts = _parse_points(payload, m)
        requests.append(pts[0] if problem is Problem.KSERVER else pts)
    decisions = [int(r[1]) for r in rows]
    ledger = CostLedger()
    for r in rows:
        ledger.add(float(r[2]), 0.0, int(r[1]))
    trace = Trace(problem, space, int(header["k"]), _parse_points(header["initial"], m), requests,
                  decisions, ledger, float(header.get("radius", 1.0)), int(header.get("seed", 0)))
    if opt:
        trace.opt_cost = float(opt["cost"])
        trace.opt_decisions = [int(v) for v in opt["decisions"].split(",") if v]
    return trace
