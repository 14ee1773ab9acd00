"""Acceptance criteria, each run at its stated size, tolerance and time limit.

Every test carries a ``criterion`` marker; the conftest prints one PASS/FAIL
line per criterion at the end of the session.
"""

import math
import time

import numpy as np
import pytest

from assigncore import cli
from assigncore.core import brute_force_extremes, ck_auction, firm_optimal, is_core, worker_optimal
from assigncore.market import DistributionSpec, generate_market
from assigncore.matching import brute_force_matching, max_weight_matching
from assigncore.simulator import (KRule, SimConfig, mean_of, run_trials, trial_seed,
                                  worst_worker_regression)
from assigncore.tables import parse_csv

U = DistributionSpec.uniform()
EXP = DistributionSpec.exponential()
SEED = 20140601

# CSV bytes from criteria 4 and 9, compared against fresh reruns in criterion 11.
_FIRST_RUN: dict[str, bytes] = {}


class Clock:
    def __init__(self, limit):
        self.limit = limit
        self.start = time.perf_counter()

    def check(self, detail):
        elapsed = time.perf_counter() - self.start
        detail["time"] = f"{elapsed:.1f}s/{self.limit}s"
        assert elapsed < self.limit, f"took {elapsed:.1f}s, limit {self.limit}s"


@pytest.mark.criterion(1, "matching solver equals brute force exactly")
def test_c01_matching_oracle(detail):
    clock = Clock(10)
    rng = np.random.default_rng(1)
    mismatches = 0
    for i in range(200):
        n = int(rng.integers(1, 7))
        k = int(rng.integers(0, 9 - n))
        m = generate_market(n, k, U if i % 2 else EXP, 10_000 + i)
        if max_weight_matching(m)[1] != brute_force_matching(m)[1]:
            mismatches += 1
    detail["markets"] = 200
    detail["mismatches"] = mismatches
    assert mismatches == 0
    clock.check(detail)


@pytest.mark.criterion(2, "extreme core allocations equal vertex enumeration within 1e-9")
def test_c02_core_oracle(detail):
    clock = Clock(30)
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(1, 4))
        k = int(rng.integers(0, 5 - n))
        m = generate_market(n, k, U if i % 2 else EXP, 20_000 + i)
        bf, bw = brute_force_extremes(m)
        for ours, oracle in ((firm_optimal(m), bf), (worker_optimal(m), bw)):
            worst = max(worst, float(np.abs(ours.u - oracle.u).max()),
                        float(np.abs(ours.v - oracle.v).max()))
    detail["max_abs_diff"] = f"{worst:.2e}"
    assert worst <= 1e-9
    clock.check(detail)


@pytest.mark.criterion(3, "firm/worker extremes and eps-auction pass the core check at n=200")
def test_c03_core_validity(detail):
    clock = Clock(120)
    eps = 1e-4
    violations = 0
    for i in range(100):
        m = generate_market(200, 0, U, trial_seed(SEED, 200, i))
        matching, surplus = max_weight_matching(m)
        violations += len(is_core(m, firm_optimal(m, matching), surplus=surplus))
        violations += len(is_core(m, worker_optimal(m, matching), surplus=surplus))
        violations += len(is_core(m, ck_auction(m, eps), pair_tol=eps + 1e-12, surplus=surplus))
    detail["markets"] = 100
    detail["violations"] = violations
    assert violations == 0
    clock.check(detail)


def _run_cli(argv, path):
    code = cli.main([str(a) for a in argv] + ["--out", str(path)])
    assert code == 0, f"{argv} exited {code}"
    return path.read_bytes()


SIMULATE_ARGS = ["simulate", "--n", 100, "--k", 0, "--dist", "uniform", "--trials", 400,
                 "--allocation", "firm", "--seed", SEED]


def _graph_runs(tmp_path):
    out = {}
    for seed in range(10):
        out[f"mid-{seed}"] = _run_cli(
            ["graph-check", "--n", 1000, "--dist", "uniform", "--seed", seed,
             "--sizes", 1, 5, 25, 100, "--samples", 1000], tmp_path / f"g{seed}.csv")
        out[f"large-{seed}"] = _run_cli(
            ["graph-check", "--n", 10_000, "--dist", "uniform", "--seed", seed, "--stream",
             "--sizes", 1, "--samples", 10], tmp_path / f"s{seed}.csv")
    return out


@pytest.mark.criterion(4, "mean salary sum at n=100 over 400 trials in [2.0, 6.5]")
def test_c04_salary_sum_band(tmp_path, detail):
    clock = Clock(300)
    data = _run_cli(SIMULATE_ARGS, tmp_path / "sim.csv")
    _FIRST_RUN["simulate"] = data
    table = parse_csv(data)
    trials = [r for r in table.rows if isinstance(r[2], int)]
    assert len(trials) == 400
    mean = math.fsum(r[table.columns.index("sum_v")] for r in trials) / 400
    detail["mean_sum_v"] = f"{mean:.3f}"
    detail["ln_n"] = f"{math.log(100):.3f}"
    assert 2.0 <= mean <= 6.5
    clock.check(detail)


@pytest.mark.criterion(5, "worker dispersion decreases in n and dv*n/ln^2 n stays within x4")
def test_c05_dispersion_scaling(detail):
    clock = Clock(900)
    ns = (50, 100, 200, 400)
    stats = run_trials(SimConfig(ns, KRule("balanced"), U, "firm_optimal", 100, SEED))
    dv = [mean_of(stats, "dv", n) for n in ns]
    scaled = [d * n / math.log(n) ** 2 for d, n in zip(dv, ns)]
    detail["dv"] = "/".join(f"{d:.4f}" for d in dv)
    detail["scaled"] = "/".join(f"{s:.3f}" for s in scaled)
    assert all(a > b for a, b in zip(dv, dv[1:]))
    assert max(scaled) / min(scaled) <= 4.0
    clock.check(detail)


@pytest.mark.criterion(6, "long-side share falls in n and is < 0.15 at n=200 (k=1)")
def test_c06_unbalanced_squeeze(detail):
    clock = Clock(600)
    ns = (50, 100, 200)
    stats = run_trials(SimConfig(ns, KRule("plus_one"), U, "worker_optimal", 100, SEED))
    share = [mean_of(stats, "workers_share", n) for n in ns]
    detail["share"] = "/".join(f"{s:.4f}" for s in share)
    assert share[0] > share[1] > share[2]
    assert share[2] < 0.15
    clock.check(detail)


@pytest.mark.criterion(7, "mean surplus/n >= 0.95 at n=500")
def test_c07_surplus_efficiency(detail):
    clock = Clock(180)
    ratios = [max_weight_matching(generate_market(500, 0, U, trial_seed(SEED, 500, t)))[1] / 500
              for t in range(20)]
    mean = float(np.mean(ratios))
    detail["mean_surplus_per_n"] = f"{mean:.4f}"
    assert mean >= 0.95
    clock.check(detail)


@pytest.mark.criterion(8, "exponential max salary grows from n=200 to 800 and exceeds 1")
def test_c08_exponential_dispersion(detail):
    clock = Clock(600)
    stats = run_trials(SimConfig((200, 800), KRule("balanced"), EXP, "firm_optimal", 50, SEED))
    lo, hi = mean_of(stats, "max_v", 200), mean_of(stats, "max_v", 800)
    detail["max_v"] = f"{lo:.3f}/{hi:.3f}"
    assert hi > lo
    assert hi > 1.0
    clock.check(detail)


@pytest.mark.criterion(9, "no sampled expansion failures at n=1000; pointed values above floor at n=1e4")
def test_c09_expander_audit(tmp_path, detail):
    clock = Clock(300)
    runs = _graph_runs(tmp_path)
    _FIRST_RUN.update(runs)
    failures, sizes_seen, floors = 0, set(), []
    for name, data in runs.items():
        table = parse_csv(data)
        col = {c: i for i, c in enumerate(table.columns)}
        for row in table.rows:
            check = row[col["check"]]
            if check == "firm_expansion":
                assert row[col["samples"]] == (1000 if name.startswith("mid") else 10)
                if name.startswith("mid"):
                    sizes_seen.add(row[col["size"]])
                    failures += row[col["failures"]]
            elif check == "min_pointed_value" and name.startswith("large"):
                floors.append((row[col["observed"]], row[col["bound"]]))
    assert sizes_seen == {1, 5, 25, 100}
    assert len(floors) == 10
    detail["expansion_failures"] = failures
    detail["min_pointed"] = f"{min(v for v, _ in floors):.4f}>{floors[0][1]:.4f}"
    assert failures == 0
    assert all(v > t for v, t in floors)
    clock.check(detail)


@pytest.mark.criterion(10, "salary sum falls with worst worker quality, R^2 > 0.2")
def test_c10_worst_worker(detail):
    clock = Clock(120)
    fit = worst_worker_regression(100, 100, U, SEED)
    detail["slope"] = f"{fit.slope:.2f}"
    detail["r2"] = f"{fit.r2:.3f}"
    assert fit.defined
    assert fit.slope < 0
    assert fit.r2 > 0.2
    clock.check(detail)


@pytest.mark.criterion(11, "criteria 4 and 9 rerun byte-identically")
def test_c11_determinism(tmp_path, detail):
    if "simulate" not in _FIRST_RUN:
        _FIRST_RUN["simulate"] = _run_cli(SIMULATE_ARGS, tmp_path / "first.csv")
    if "mid-0" not in _FIRST_RUN:
        (tmp_path / "first").mkdir()
        _FIRST_RUN.update(_graph_runs(tmp_path / "first"))
    (tmp_path / "again").mkdir()
    again = {"simulate": _run_cli(SIMULATE_ARGS, tmp_path / "again" / "sim.csv")}
    again.update(_graph_runs(tmp_path / "again"))
    differing = sorted(k for k in again if again[k] != _FIRST_RUN[k])
    detail["outputs"] = len(again)
    detail["differing"] = len(differing)
    assert not differing, differing
