"""The firm -> top-workers / worker -> employer pointer graph and its audits.

Every firm points to its ``fanout`` most valuable workers, where
``fanout = ceil(32 * ((n + k) / n) * ln n)`` (at least 1, at most ``n + k``),
and every employed worker points to her employer. Expansion of this graph is
what forces payoffs on each side of a random market close together.
Logarithms are natural throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Allocation, is_core
from .market import DistributionSpec, Market, market_rows
from .matching import UNMATCHED, Matching

LOSS_CONSTANT = 512.0


def fanout_for(n: int, k: int) -> int:
    m = n + k
    raw = math.ceil(32.0 * (m / n) * math.log(n)) if n > 1 else 0
    return max(1, min(raw, m))


def loss_threshold(n: int, density_at_sup: float) -> float:
    """Lower bound on pointed values predicted for large markets, clamped at 0."""
    return max(0.0, 1.0 - LOSS_CONSTANT * math.log(n) / (density_at_sup * n))


@dataclass(frozen=True, eq=False)
class PointerGraph:
    n: int
    k: int
    fanout: int
    firm_edges: np.ndarray = field(repr=False)     # (n, fanout) worker indices, ascending per row
    edge_values: np.ndarray = field(repr=False)    # alpha at those edges
    worker_edges: np.ndarray | None = field(default=None, repr=False)  # employer or -1

    @property
    def n_workers(self) -> int:
        return self.n + self.k

    @property
    def has_worker_edges(self) -> bool:
        return self.worker_edges is not None


def _top_columns(block: np.ndarray, beta: int) -> np.ndarray:
    """Per row, the ascending indices of the ``beta`` largest entries (ties -> lowest index)."""
    rows, m = block.shape
    if beta >= m:
        return np.broadcast_to(np.arange(m), (rows, m)).copy()
    kth = -np.partition(-block, beta - 1, axis=1)[:, beta - 1]
    above = block > kth[:, None]
    at = block == kth[:, None]
    need = beta - above.sum(axis=1)
    chosen = above | (at & (np.cumsum(at, axis=1) <= need[:, None]))
    return np.nonzero(chosen)[1].reshape(rows, beta)


def _worker_edges(matching: Matching | None, n: int, m: int):
    if matching is None:
        return None
    if matching.firm_to_worker.shape != (n,) or matching.worker_to_firm.shape != (m,):
        raise ValueError("matching dimensions do not match the market")
    return matching.worker_to_firm.copy()


def build_pointer_graph(market: Market, matching: Matching | None = None) -> PointerGraph:
    """Pointer graph of ``market``; worker edges are omitted when no matching is given."""
    n, m = market.n, market.n_workers
    beta = fanout_for(n, market.k)
    edges = _top_columns(market.alpha, beta)
    values = np.take_along_axis(market.alpha, edges, axis=1)
    return PointerGraph(n, market.k, beta, edges, values, _worker_edges(matching, n, m))


def stream_pointer_graph(n: int, k: int, dist: DistributionSpec, seed: int) -> PointerGraph:
    """Firm side of the pointer graph of ``generate_market(n, k, dist, seed)``, row-chunked.

    Identical to ``build_pointer_graph`` on the generated market but never
    holds the full matrix, so it scales to ``n`` in the tens of thousands.
    """
    beta = fanout_for(n, k)
    edges = np.empty((n, min(beta, n + k)), dtype=np.int64)
    values = np.empty(edges.shape)
    for row, block in market_rows(n, k, dist, seed):
        top = _top_columns(block, beta)
        edges[row:row + len(block)] = top
        values[row:row + len(block)] = np.take_along_axis(block, top, axis=1)
    return PointerGraph(n, k, beta, edges, values, None)


@dataclass(frozen=True)
class ExpansionRow:
    side: str           # "firm": |N(S)| for firm sets; "worker": firms pointing into worker sets
    size: int
    samples: int
    bound: float
    min_neighbors: int
    failures: int


@dataclass(frozen=True)
class ExpansionReport:
    rows: list[ExpansionRow]

    @property
    def failures(self) -> int:
        return sum(r.failures for r in self.rows)

    @property
    def verdict(self) -> str:
        # Sampling can find counterexamples but never proves the property.
        return "no_failures_found" if self.failures == 0 else "failures_found"


def _expansion_bound(graph: PointerGraph, side: str, size: int) -> float:
    n, k, m = graph.n, graph.k, graph.n_workers
    if size < 1:
        raise ValueError("set sizes must be positive")
    if side == "firm":
        if k > n:
            if size > n:
                raise ValueError(f"firm set size {size} exceeds n = {n}")
            return 2.0 * m / n * size
        if size < n / 10:
            return 2.0 * m / n * size
        if size == n // 10:
            return 0.99 * m
        raise ValueError(f"firm set size {size} out of range (needs < n/10 or == floor(n/10))")
    if side == "worker":
        if size < n / 10 and size <= m:
            return 2.0 * size
        raise ValueError(f"worker set size {size} out of range (needs < n/10)")
    raise ValueError(f"unknown side {side!r}")


def check_expansion(graph: PointerGraph, set_sizes, samples_per_size: int, seed: int,
                    side: str = "firm") -> ExpansionReport:
    """Sample random agent sets and count those that fail to expand.

    ``side="firm"`` checks ``|N(S)| >= 2 (n + k) / n * |S|`` for firm sets
    (``|N(S)| >= 0.99 (n + k)`` at size ``floor(n/10)``); ``side="worker"``
    checks that at least ``2 |S|`` firms point into a worker set ``S``.
    """
    if samples_per_size < 1:
        raise ValueError("samples_per_size must be positive")
    sizes = [int(s) for s in set_sizes]
    bounds = [_expansion_bound(graph, side, s) for s in sizes]
    rng = np.random.default_rng(seed)
    m = graph.n_workers
    if side == "worker":
        # Reverse adjacency: firms pointing at each worker, CSR layout.
        flat = graph.firm_edges.ravel()
        order = np.argsort(flat, kind="stable")
        pointing = order // graph.firm_edges.shape[1]
        starts = np.searchsorted(flat[order], np.arange(m + 1))
    rows = []
    for size, bound in zip(sizes, bounds):
        failures = 0
        lowest = None
        for _ in range(samples_per_size):
            if side == "firm":
                chosen = rng.choice(graph.n, size=size, replace=False)
                mask = np.zeros(m, dtype=bool)
                mask[graph.firm_edges[chosen].ravel()] = True
                count = int(mask.sum())
            else:
                chosen = rng.choice(m, size=size, replace=False)
                mask = np.zeros(graph.n, dtype=bool)
                for w in chosen:
                    mask[pointing[starts[w]:starts[w + 1]]] = True
                count = int(mask.sum())
            lowest = count if lowest is None else min(lowest, count)
            if count < bound:
                failures += 1
        rows.append(ExpansionRow(side, size, samples_per_size, bound, lowest, failures))
    return ExpansionReport(rows)


@dataclass(frozen=True)
class PointedValue:
    min_value: float
    threshold: float

    @property
    def passes(self) -> bool:
        return self.min_value > self.threshold


def min_pointed_value(graph: PointerGraph, market: Market | DistributionSpec) -> PointedValue:
    """Smallest productivity on any firm edge, next to the predicted floor."""
    dist = market.dist if isinstance(market, Market) else market
    if not dist.bounded:
        raise ValueError(f"pointed-value floor needs a bounded distribution, got {dist.tag}")
    return PointedValue(float(graph.edge_values.min()), loss_threshold(graph.n, dist.density_at_sup))


@dataclass(frozen=True)
class AuditReport:
    unemployed_edges: int
    unemployed_violations: int
    worst_unemployed_slack: float | None
    paths: int
    path_violations: int
    worst_path_slack: float | None
    value_floor: float

    @property
    def violations(self) -> int:
        return self.unemployed_violations + self.path_violations


def audit_path_inequalities(graph: PointerGraph, market: Market, allocation: Allocation,
                            core_tol: float = 1e-6) -> AuditReport:
    """Check the local payoff inequalities along pointer-graph edges and 2-step paths.

    For an edge ``f -> w`` with ``w`` unemployed: ``u[f] >= alpha[f, w]``.
    For a path ``f -> w -> f'``: ``u[f] >= alpha[f, w] - (1 - u[f'])``.
    Both follow from the core constraints when productivities lie in [0, 1].
    """
    if not market.dist.bounded:
        raise ValueError("path audit needs a bounded distribution")
    if not graph.has_worker_edges:
        raise ValueError("pointer graph was built without a matching")
    if not np.array_equal(graph.worker_edges, allocation.matching.worker_to_firm):
        raise ValueError("pointer graph and allocation use different matchings")
    violations = is_core(market, allocation, core_tol)
    if violations:
        raise ValueError(f"allocation is not in the core: {violations[0]} (+{len(violations) - 1} more)")

    u = allocation.u
    tol = 3.0 * core_tol
    edges, values = graph.firm_edges, graph.edge_values
    employer = graph.worker_edges[edges]
    firms = np.broadcast_to(np.arange(graph.n)[:, None], edges.shape)

    idle = employer == UNMATCHED
    idle_slack = (u[:, None] - values)[idle]
    busy = ~idle
    path_slack = (u[firms[busy]] - (values[busy] - 1.0 + u[employer[busy]]))

    return AuditReport(
        unemployed_edges=int(idle.sum()),
        unemployed_violations=int((idle_slack < -tol).sum()),
        worst_unemployed_slack=float(idle_slack.min()) if idle_slack.size else None,
        paths=int(busy.sum()),
        path_violations=int((path_slack < -tol).sum()),
        worst_path_slack=float(path_slack.min()) if path_slack.size else None,
        value_floor=loss_threshold(graph.n, market.dist.density_at_sup),
    )


def firm_distances(graph: PointerGraph, source: int) -> np.ndarray:
    """Directed path lengths (in edges) from ``source`` to every firm; -1 if unreachable."""
    if not graph.has_worker_edges:
        raise ValueError("pointer graph was built without a matching")
    if not 0 <= source < graph.n:
        raise IndexError(f"firm {source} out of range")
    dist = np.full(graph.n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source])
    hops = 0
    while frontier.size:
        hops += 1
        nxt = graph.worker_edges[graph.firm_edges[frontier].ravel()]
        nxt = np.unique(nxt[nxt != UNMATCHED])
        nxt = nxt[dist[nxt] == -1]
        dist[nxt] = 2 * hops
        frontier = nxt
    return dist


def firm_path_distance(graph: PointerGraph, source: int, target: int) -> int | None:
    """Shortest firm -> worker -> firm path length, or ``None`` when unreachable."""
    if not 0 <= target < graph.n:
        raise IndexError(f"firm {target} out of range")
    d = int(firm_distances(graph, source)[target])
    return None if d < 0 else d
