import csv
import io
import math

import numpy as np
import pytest

from smoothserve import harness
from smoothserve.harness import ConfigError, Scenario, parse_config, run_scenario, run_trial, sweep
from smoothserve.metric import NormedSpace
from smoothserve.net import size_bound
from smoothserve.problems import Trace, write_trace
from smoothserve.smoothing import choose_eta, opt_amortized_bound

BASE = """
# small k-server scenario
problem = kserver
k = 2
m = 1
norm = l2
radius = 1.0
generator = perturbed
rho = 0.25
algorithm = wrapped:wfa
T = 200
seeds = 0, 1
"""


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_parse_config():
    sc = parse_config(BASE)
    assert (sc.problem, sc.k, sc.rho, sc.T, sc.seeds) == ("kserver", 2, 0.25, 200, (0, 1))
    assert parse_config("\n".join(sc.lines())) == sc
    assert sc.hash == parse_config(BASE.replace("seeds = 0, 1", "seeds = 5")).hash


@pytest.mark.parametrize("text", [
    "k = 2\nbogus = 1", "k = two", "problem = paging", "T = 0", "seeds = 1, 1",
    "just a line", "T = 10\nburn_in = 10", "opt_fallback = maybe",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_row_formulas():
    sc = parse_config(BASE)
    row = run_trial(sc, 0)
    sigma = (0.25 / 1.0) ** 1
    assert row["sigma"] == sigma
    eta = choose_eta("kserver", sigma, 2, 1, 1.0)
    assert row["eta"] == eta
    assert row["net_size"] <= row["size_bound"] == size_bound(1.0, eta, 1)
    assert row["opt_bound"] == opt_amortized_bound("kserver", sigma, 2, 1, 1.0)
    assert row["log_k_over_sigma"] == math.log(2 / sigma)
    assert row["ratio"] == row["online_cost"] / row["opt_cost"]
    assert row["opt_kind"] == "exact" and row["a_n"] == "wrapped:wfa"
    # ledger identity recovered from the row alone
    assert row["online_cost"] == pytest.approx(
        row["inner_cost"] + row["detours"] + row["initial_projection"], abs=1e-9)


def test_burn_in_trims_both_ledgers():
    sc = parse_config(BASE + "burn_in = 50\n")
    full = run_trial(parse_config(BASE), 0)
    trimmed = run_trial(sc, 0)
    assert trimmed["online_cost"] <= full["online_cost"]
    assert trimmed["opt_cost"] <= full["opt_cost"] + 1e-9
    assert trimmed["opt_per_request"] == trimmed["opt_cost"] / 150


def test_determinism_bytes():
    sc = parse_config(BASE)
    a = harness.rows_to_csv(run_scenario(sc))
    b = harness.rows_to_csv(run_scenario(sc))
    assert a == b and len(table(a)) == 2


def test_workers_match_serial(monkeypatch):
    sc = parse_config(BASE.replace("seeds = 0, 1", "seeds = 0, 1, 2"))
    serial = harness.rows_to_csv(run_scenario(sc))
    monkeypatch.setenv(harness.WORKERS_ENV, "2")
    assert harness.rows_to_csv(run_scenario(sc)) == serial
    monkeypatch.setenv(harness.WORKERS_ENV, "x")
    with pytest.raises(ConfigError):
        harness.workers()


def test_scripted_generator_replays_trace(tmp_path):
    rng = np.random.default_rng(0)
    space = NormedSpace(1)
    reqs = list(rng.uniform(-1, 1, (40, 1)))
    tr = Trace.from_decisions("kserver", space, 2, [[-0.5], [0.5]], reqs, [0] * 40)
    path = tmp_path / "s.trace"
    write_trace(tr, path)
    text = f"problem = kserver\nk = 2\nm = 1\ngenerator = scripted\ntrace = {path}\nsigma = 0.5\nT = 40\n"
    sc = parse_config(text)
    r1 = harness.rows_to_csv([run_trial(sc, 3)])
    r2 = harness.rows_to_csv([run_trial(sc, 3)])
    assert r1 == r2
    with pytest.raises(ConfigError):
        run_trial(parse_config(text.replace("sigma = 0.5\n", "")), 0)


def test_opt_mean_above_bound():
    sc = Scenario(problem="kserver", k=2, m=1, generator="uniform", algorithm="greedy", T=2000,
                  seeds=tuple(range(4)))
    per = [r["opt_per_request"] for r in run_scenario(sc)]
    se = np.std(per, ddof=1) / np.sqrt(len(per))
    assert np.mean(per) >= 0.0078125 - 3 * se


def test_opt_gate_and_fallbacks():
    big = Scenario(problem="kserver", k=2, generator="uniform", algorithm="greedy", T=4000)
    with pytest.raises(ConfigError):
        run_trial(big, 0)
    row = run_trial(Scenario(problem="kserver", k=2, generator="uniform", algorithm="greedy",
                             T=4000, opt_fallback="none"), 0)
    assert row["opt_cost"] is None and row["opt_kind"] == "none" and row["ratio"] is None
    row = run_trial(Scenario(problem="kserver", k=3, generator="hypercube", algorithm="wrapped:wfa",
                             T=4000), 0)
    assert row["opt_kind"] == "upper_bound"


def test_sweep_cardinality_and_order():
    sc = parse_config(BASE.replace("T = 200", "T = 60").replace("wrapped:wfa", "wrapped:auto"))
    rows, axis_values = sweep(sc, "sigma", ["1", "0.1", "0.01"])
    assert rows[0]["a_n"] == "wrapped:greedy" and rows[-1]["a_n"] == "wrapped:wfa"
    assert len(rows) == 3 * len(sc.seeds)
    assert axis_values == [0.01, 0.01, 0.1, 0.1, 1.0, 1.0]
    assert [r["seed"] for r in rows] == [0, 1] * 3
    assert [r["sigma"] for r in rows] == pytest.approx([0.01, 0.01, 0.1, 0.1, 1.0, 1.0])
    text = harness.rows_to_csv(rows, axis="sigma", axis_values=axis_values)
    assert text.splitlines()[0].startswith("axis_sigma,")
    rows, vals = sweep(sc, "k", ["3", "1"])
    assert vals == [1, 1, 3, 3] and [r["k"] for r in rows] == vals


def test_sweep_empty_values_header_only():
    rows, vals = sweep(parse_config(BASE), "T", [])
    text = harness.rows_to_csv(rows, axis="T", axis_values=vals)
    assert text.count("\n") == 1 and text.startswith("axis_T,scenario,")


def test_sweep_axis_errors():
    sc = parse_config(BASE)
    with pytest.raises(ConfigError):
        sweep(sc, "rho", ["0.1"])
    with pytest.raises(ConfigError):
        sweep(sc, "sigma", ["2"])


@pytest.mark.parametrize("problem,alg", [
    ("ktaxi", "wrapped:auto"), ("chasing", "wrapped:wfa"), ("kserver", "ensemble:auto"),
    ("chasing", "ensemble:greedy"), ("kserver", "greedy"),
])
def test_problem_algorithm_grid(problem, alg):
    sc = Scenario(problem=problem, k=2, m=2, generator="perturbed", rho=0.5, algorithm=alg, T=80)
    row = run_trial(sc, 0)
    assert row["online_cost"] >= row["opt_cost"] - 1e-9
    if alg.startswith("ensemble"):
        assert row["switches"] is not None and row["detours"] is None


def test_taxi_unknown_sigma_needs_floor():
    sc = Scenario(problem="ktaxi", k=2, generator="uniform", algorithm="ensemble:auto",
                  sigma_mode="unknown", T=20)
    with pytest.raises(ConfigError):
        run_trial(sc, 0)
    row = run_trial(Scenario(problem="ktaxi", k=2, generator="uniform", algorithm="ensemble:auto",
                             sigma_mode="unknown", sigma_floor=0.05, T=20), 0)
    assert row["a_n"].startswith("ensemble[")


def test_timing_column_only_on_request():
    rows = run_scenario(parse_config(BASE.replace("T = 200", "T = 20")))
    assert "runtime" not in harness.rows_to_csv(rows).splitlines()[0]
    timed = table(harness.rows_to_csv(rows, timing=True))
    assert all(float(r["runtime"]) > 0 for r in timed)
