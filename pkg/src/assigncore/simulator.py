"""Monte-Carlo experiments on random assignment markets.

Trial ``t`` of data point ``n`` always uses the market seed
``trial_seed(base_seed, n, t)``, so results do not depend on how trials are
scheduled across worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .core import Allocation, firm_optimal, is_core, worker_optimal, dispersion
from .market import DistributionSpec, Market, generate_market
from .matching import max_weight_matching

log = logging.getLogger(__name__)

DEFAULT_SEED = 20140601
DEFAULT_TRIALS = 400
CORE_CHECK_TOL = 1e-6
RULES = ("firm_optimal", "worker_optimal")


class TrialError(RuntimeError):
    """A trial produced an allocation that failed an internal invariant."""


@dataclass(frozen=True)
class KRule:
    """How the worker surplus ``k`` is chosen for each firm count ``n``.

    ``kind`` is ``fixed`` (``k = value``), ``balanced`` (0), ``plus_one`` (1)
    or ``fixed_workers`` (``k = value - n``).
    """

    kind: str
    value: int = 0

    def k_for(self, n: int) -> int:
        if self.kind == "fixed":
            k = self.value
        elif self.kind == "balanced":
            k = 0
        elif self.kind == "plus_one":
            k = 1
        elif self.kind == "fixed_workers":
            k = self.value - n
        else:
            raise ValueError(f"unknown k rule {self.kind!r}")
        if k < 0:
            raise ValueError(f"k rule {self.kind}({self.value}) gives k = {k} < 0 at n = {n}")
        return k


@dataclass(frozen=True)
class SimConfig:
    n_values: tuple[int, ...]
    k_rule: KRule = KRule("balanced")
    dist: DistributionSpec = DistributionSpec.uniform()
    allocation_rule: str = "firm_optimal"
    trials: int = DEFAULT_TRIALS
    base_seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if not self.n_values:
            raise ValueError("n_values must be non-empty")
        if any(n < 1 for n in self.n_values):
            raise ValueError("every n must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.allocation_rule not in RULES:
            raise ValueError(f"allocation_rule must be one of {RULES}")


@dataclass(frozen=True)
class TrialStats:
    n: int
    k: int
    trial: int
    surplus: float
    sum_v: float
    max_v: float
    min_v: float
    mean_v: float
    du: float
    dv: float
    workers_share: float
    worst_q: float
    second_worst_q: float


STAT_COLUMNS = tuple(f.name for f in fields(TrialStats))
METRIC_COLUMNS = STAT_COLUMNS[3:]


def trial_seed(base_seed: int, n: int, trial: int) -> int:
    state = np.random.SeedSequence([int(base_seed), int(n), int(trial)]).generate_state(1, np.uint64)
    return int(state[0])


def worker_qualities(market: Market) -> np.ndarray:
    """Each worker's best productivity with any firm, sorted ascending."""
    return np.sort(market.alpha.max(axis=0))


def solve_allocation(market: Market, rule: str) -> tuple[Allocation, float]:
    """Extreme core allocation for ``rule`` plus the optimal surplus, core-checked."""
    matching, surplus = max_weight_matching(market)
    if rule == "firm_optimal":
        alloc = firm_optimal(market, matching)
    elif rule == "worker_optimal":
        alloc = worker_optimal(market, matching)
    else:
        raise ValueError(f"unknown allocation rule {rule!r}")
    violations = is_core(market, alloc, CORE_CHECK_TOL, surplus=surplus)
    if violations:
        raise TrialError(f"{rule} allocation failed the core check: "
                         + "; ".join(str(v) for v in violations[:5]))
    return alloc, surplus


def trial_stats(market: Market, alloc: Allocation, surplus: float, trial: int = 0) -> TrialStats:
    v = alloc.v
    sum_v = math.fsum(v)
    share = min(1.0, max(0.0, sum_v / surplus)) if surplus > 0 else 0.0
    du, dv = dispersion(alloc)
    q = worker_qualities(market)
    return TrialStats(
        n=market.n, k=market.k, trial=trial, surplus=surplus,
        sum_v=sum_v, max_v=float(v.max()), min_v=float(v.min()), mean_v=sum_v / v.size,
        du=du, dv=dv, workers_share=share,
        worst_q=float(q[0]), second_worst_q=float(q[1]) if q.size > 1 else math.nan,
    )


def run_trial(n: int, k: int, dist: DistributionSpec, rule: str, base_seed: int,
              trial: int) -> TrialStats:
    market = generate_market(n, k, dist, trial_seed(base_seed, n, trial))
    alloc, surplus = solve_allocation(market, rule)
    return trial_stats(market, alloc, surplus, trial)


def _run_task(task):
    try:
        return run_trial(*task)
    except Exception as exc:  # recorded by the caller, never dropped
        return f"{type(exc).__name__}: {exc}"


def _map_tasks(tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def run_trials(config: SimConfig, failures: list | None = None, jobs: int = 1) -> list[TrialStats]:
    """Run every (n, trial) of ``config`` in deterministic order.

    A failed trial raises :class:`TrialError` unless a ``failures`` list is
    supplied, in which case ``(n, trial, message)`` is appended to it and the
    trial is left out of the result.
    """
    tasks = [(n, config.k_rule.k_for(n), config.dist, config.allocation_rule, config.base_seed, t)
             for n in config.n_values for t in range(config.trials)]
    out = []
    for task, result in zip(tasks, _map_tasks(tasks, jobs)):
        if isinstance(result, TrialStats):
            out.append(result)
            continue
        n, t = task[0], task[5]
        log.error("trial n=%d t=%d failed: %s", n, t, result)
        if failures is None:
            raise TrialError(f"trial n={n} t={t} failed: {result}")
        failures.append((n, t, result))
    return out


def _mean_stderr(values) -> tuple[float, float]:
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    if x.size == 0:
        return math.nan, math.nan
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return mean, se


def aggregate(stats: list[TrialStats]) -> list[dict]:
    """Per-(n, k) means and standard errors of every metric, in first-seen order."""
    groups: dict[tuple[int, int], list[TrialStats]] = {}
    for s in stats:
        groups.setdefault((s.n, s.k), []).append(s)
    rows = []
    for (n, k), group in groups.items():
        row = {"n": n, "k": k, "trials": len(group)}
        for col in METRIC_COLUMNS:
            row[col], row[f"{col}_se"] = _mean_stderr([getattr(s, col) for s in group])
        rows.append(row)
    return rows


def mean_of(stats: list[TrialStats], column: str, n: int | None = None) -> float:
    vals = [getattr(s, column) for s in stats if n is None or s.n == n]
    return float(np.mean(vals))


def _share_trial(firms: int, workers: int, dist: DistributionSpec, rule: str, seed: int) -> float:
    if firms <= workers:
        market = generate_market(firms, workers - firms, dist, seed)
        alloc, surplus = solve_allocation(market, rule)
        paid = math.fsum(alloc.v)
    else:
        # Rows must be the short side, so workers become the rows; the rule flips with them.
        market = generate_market(workers, firms - workers, dist, seed)
        flipped = "worker_optimal" if rule == "firm_optimal" else "firm_optimal"
        alloc, surplus = solve_allocation(market, flipped)
        paid = math.fsum(alloc.u)
    return min(1.0, max(0.0, paid / surplus)) if surplus > 0 else 0.0


def _share_task(task):
    try:
        return _share_trial(*task)
    except Exception as exc:
        return f"{type(exc).__name__}: {exc}"


def sweep_firms(total_workers: int, firm_counts, dist: DistributionSpec, rule: str,
                trials: int, seed: int = DEFAULT_SEED, jobs: int = 1) -> list[dict]:
    """Workers' surplus share as the number of firms varies around a fixed workforce."""
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    if total_workers < 1 or trials < 1:
        raise ValueError("total_workers and trials must be positive")
    firm_counts = [int(f) for f in firm_counts]
    if any(f < 1 for f in firm_counts):
        raise ValueError("firm counts must be positive")
    tasks = [(f, total_workers, dist, rule, trial_seed(seed, f, t))
             for f in firm_counts for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_share_task, tasks))
    else:
        results = [_share_task(t) for t in tasks]
    bad = [(t[0], r) for t, r in zip(tasks, results) if isinstance(r, str)]
    if bad:
        raise TrialError(f"{len(bad)} sweep trials failed; first (firms={bad[0][0]}): {bad[0][1]}")
    rows = []
    for i, f in enumerate(firm_counts):
        mean, se = _mean_stderr(results[i * trials:(i + 1) * trials])
        rows.append({"firms": f, "workers": total_workers, "rule": rule, "trials": trials,
                     "workers_share": mean, "workers_share_se": se})
    return rows


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def salary_histogram(market: Market, allocation: Allocation, bin_count: int) -> Histogram:
    """Equal-width histogram of all worker salaries over ``[min_v, max_v]``."""
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    v = allocation.v
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        counts = np.zeros(bin_count, dtype=np.int64)
        counts[0] = v.size
        return Histogram(np.full(bin_count + 1, lo), counts)
    counts, edges = np.histogram(v, bins=bin_count, range=(lo, hi))
    return Histogram(edges, counts.astype(np.int64))


@dataclass(frozen=True)
class LinearFit:
    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    r2: float
    defined: bool
    label: str = ""


def linear_fit(x, y, label: str = "") -> LinearFit:
    """Ordinary least squares of ``y`` on ``x``; flagged undefined when ``x`` is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0.0:
        return LinearFit(x, y, math.nan, math.nan, math.nan, False, label)
    xc, yc = x - x.mean(), y - y.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    syy = float(yc @ yc)
    r2 = (float(xc @ yc) ** 2) / (sxx * syy) if syy > 0 else 1.0
    return LinearFit(x, y, slope, intercept, r2, True, label)


def worst_worker_regression(n: int, trials: int, dist: DistributionSpec = DistributionSpec.uniform(),
                            seed: int = DEFAULT_SEED, rule: str = "firm_optimal",
                            jobs: int = 1) -> LinearFit:
    """Sum of salaries against the worst worker's quality over balanced trials."""
    config = SimConfig((n,), KRule("balanced"), dist, rule, trials, seed)
    stats = run_trials(config, jobs=jobs)
    return linear_fit([s.worst_q for s in stats], [s.sum_v for s in stats],
                      label="worst worker quality")


def second_worst_regression(n: int, samples: int, dist: DistributionSpec = DistributionSpec.uniform(),
                            seed: int = DEFAULT_SEED, center: float = 0.95, halfwidth: float = 1e-2,
                            max_draws: int = 1_000_000, rule: str = "firm_optimal") -> LinearFit:
    """Sum of salaries against the second-worst quality, with the worst pinned to a window.

    Markets are drawn by rejection: only those whose worst worker quality falls
    in ``center +- halfwidth`` are solved.
    """
    xs, ys = [], []
    draws = 0
    while len(xs) < samples:
        if draws >= max_draws:
            raise RuntimeError(f"accepted {len(xs)} of {samples} markets in {max_draws} draws")
        market = generate_market(n, 0, dist, trial_seed(seed, n, draws))
        draws += 1
        q = worker_qualities(market)
        if abs(q[0] - center) > halfwidth:
            continue
        alloc, surplus = solve_allocation(market, rule)
        xs.append(float(q[1]))
        ys.append(math.fsum(alloc.v))
    return linear_fit(xs, ys, label=f"second worst quality | worst in {center} +- {halfwidth}"
                                      f" ({draws} draws)")


def exp_outlier_count(market: Market) -> int:
    """Firms whose best worker exceeds ``1.1 ln n`` while all others stay below ``ln n``."""
    alpha = market.alpha
    level = math.log(market.n)
    if alpha.shape[1] == 1:
        return int((alpha[:, 0] > 1.1 * level).sum())
    top2 = -np.partition(-alpha, 1, axis=1)[:, :2]
    return int(((top2[:, 0] > 1.1 * level) & (top2[:, 1] < level)).sum())


def stats_as_rows(stats: list[TrialStats]) -> list[dict]:
    return [asdict(s) for s in stats]
