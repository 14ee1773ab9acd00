"""Core allocations of assignment games.

The core of an assignment game is the set of optimal dual solutions paired
with an optimal matching. Its worker payoffs form a lattice; the two extreme
points (lowest and highest salaries) are computed here as least fixpoints of
a monotone "best outside offer" map over a fixed optimal matching, which is
a longest-path computation on the matching's exchange graph.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .market import Market
from .matching import UNMATCHED, Matching, brute_force_matching, max_weight_matching

FIXPOINT_TOL = 1e-12


class CoreComputationError(RuntimeError):
    """An extreme-point iteration failed to converge; indicates a solver bug."""


@dataclass(frozen=True, eq=False)
class Allocation:
    """A matching together with firm profits ``u`` and worker salaries ``v``."""

    matching: Matching
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64)
        v = np.array(self.v, dtype=np.float64)
        if u.shape != self.matching.firm_to_worker.shape:
            raise ValueError("u has the wrong length")
        if v.shape != self.matching.worker_to_firm.shape:
            raise ValueError("v has the wrong length")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class CoreViolation:
    """One failed core condition. ``amount`` is the (positive) size of the failure.

    ``kind`` is one of ``pair_block``, ``negative_payoff``, ``split_mismatch``,
    ``unmatched_payoff`` or ``suboptimal_matching``.
    """

    kind: str
    amount: float
    firm: int | None = None
    worker: int | None = None
    side: str | None = None

    def __str__(self):
        where = []
        if self.side is not None:
            where.append(self.side)
        if self.firm is not None:
            where.append(f"f{self.firm}")
        if self.worker is not None:
            where.append(f"w{self.worker}")
        return f"{self.kind}({', '.join(where)}; {self.amount:.3g})"


def is_core(market: Market, allocation: Allocation, tol: float = 1e-9, *,
            pair_tol: float | None = None, surplus: float | None = None) -> list[CoreViolation]:
    """All core conditions that ``allocation`` fails in ``market``.

    ``pair_tol`` relaxes only the no-blocking-pair constraints (as needed for
    the epsilon-auction); the efficiency check then allows ``n * pair_tol``,
    the slack implied by summing the relaxed constraints over an optimal
    matching.
    """
    alpha = market.alpha
    u, v = allocation.u, allocation.v
    f2w = allocation.matching.firm_to_worker
    w2f = allocation.matching.worker_to_firm
    if u.shape != (market.n,) or v.shape != (market.n_workers,):
        raise ValueError("allocation dimensions do not match the market")
    pair_tol = tol if pair_tol is None else pair_tol
    out: list[CoreViolation] = []

    for f in np.flatnonzero(u < -tol):
        out.append(CoreViolation("negative_payoff", float(-u[f]), firm=int(f), side="firm"))
    for w in np.flatnonzero(v < -tol):
        out.append(CoreViolation("negative_payoff", float(-v[w]), worker=int(w), side="worker"))

    for f in np.flatnonzero((f2w == UNMATCHED) & (np.abs(u) > tol)):
        out.append(CoreViolation("unmatched_payoff", float(abs(u[f])), firm=int(f), side="firm"))
    for w in np.flatnonzero((w2f == UNMATCHED) & (np.abs(v) > tol)):
        out.append(CoreViolation("unmatched_payoff", float(abs(v[w])), worker=int(w), side="worker"))

    for f, w in allocation.matching.pairs():
        gap = abs(u[f] + v[w] - alpha[f, w])
        if gap > tol:
            out.append(CoreViolation("split_mismatch", float(gap), firm=f, worker=w))

    deficit = alpha - u[:, None] - v[None, :]
    for f, w in zip(*np.nonzero(deficit > pair_tol)):
        out.append(CoreViolation("pair_block", float(deficit[f, w]), firm=int(f), worker=int(w)))

    if surplus is None:
        surplus = max_weight_matching(market)[1]
    total = math.fsum(u) + math.fsum(v)
    surplus_tol = tol if pair_tol == tol else market.n * pair_tol
    if abs(surplus - total) > surplus_tol:
        out.append(CoreViolation("suboptimal_matching", float(abs(surplus - total))))
    return out


def _matched_values(alpha: np.ndarray, f2w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    firms = np.flatnonzero(f2w != UNMATCHED)
    return firms, alpha[firms, f2w[firms]]


def _least_fixpoint(step, size: int, cap: int) -> np.ndarray:
    x = np.zeros(size)
    for _ in range(cap):
        nxt = step(x)
        if np.max(np.abs(nxt - x), initial=0.0) <= FIXPOINT_TOL:
            return nxt
        x = nxt
    raise CoreComputationError(f"extreme-point iteration did not settle in {cap} rounds")


def _lowest_salaries(alpha: np.ndarray, matching: Matching) -> np.ndarray:
    n, m = alpha.shape
    f2w, w2f = matching.firm_to_worker, matching.worker_to_firm
    firms, own = _matched_values(alpha, f2w)
    partners = f2w[firms]
    unmatched_w = w2f == UNMATCHED

    def step(v):
        u = np.zeros(n)
        u[firms] = own - v[partners]
        offers = alpha - u[:, None]
        offers[firms, partners] = -np.inf
        nxt = np.maximum(offers.max(axis=0), 0.0)
        nxt[unmatched_w] = 0.0
        return nxt

    return _least_fixpoint(step, m, 10 * (n + m))


def _lowest_profits(alpha: np.ndarray, matching: Matching) -> np.ndarray:
    n, m = alpha.shape
    f2w, w2f = matching.firm_to_worker, matching.worker_to_firm
    workers = np.flatnonzero(w2f != UNMATCHED)
    employers = w2f[workers]
    own = alpha[employers, workers]
    unmatched_f = f2w == UNMATCHED

    def step(u):
        v = np.zeros(m)
        v[workers] = own - u[employers]
        offers = alpha - v[None, :]
        offers[employers, workers] = -np.inf
        nxt = np.maximum(offers.max(axis=1), 0.0)
        nxt[unmatched_f] = 0.0
        return nxt

    return _least_fixpoint(step, n, 10 * (n + m))


def _complete(alpha: np.ndarray, matching: Matching, u=None, v=None) -> Allocation:
    n, m = alpha.shape
    f2w = matching.firm_to_worker
    firms, own = _matched_values(alpha, f2w)
    if v is not None:
        u = np.zeros(n)
        u[firms] = own - v[f2w[firms]]
    else:
        v = np.zeros(m)
        v[f2w[firms]] = own - u[firms]
    # Guard against -0.0 and last-ulp negatives from the subtraction.
    return Allocation(matching, np.maximum(u, 0.0), np.maximum(v, 0.0))


def firm_optimal(market: Market, matching: Matching | None = None) -> Allocation:
    """Core allocation with every salary at its lowest core value."""
    if matching is None:
        matching = max_weight_matching(market)[0]
    v = _lowest_salaries(market.alpha, matching)
    return _complete(market.alpha, matching, v=v)


def worker_optimal(market: Market, matching: Matching | None = None) -> Allocation:
    """Core allocation with every salary at its highest core value."""
    if matching is None:
        matching = max_weight_matching(market)[0]
    u = _lowest_profits(market.alpha, matching)
    return _complete(market.alpha, matching, u=u)


@numba.njit(cache=True)
def _ascending_auction(alpha, eps):
    n, m = alpha.shape
    holder = np.full(m, -1, dtype=np.int64)
    salary = np.zeros(m)
    partner = np.full(n, -1, dtype=np.int64)
    retired = np.zeros(n, dtype=np.bool_)
    while True:
        f = -1
        for i in range(n):
            if partner[i] == -1 and not retired[i]:
                f = i
                break
        if f == -1:
            break
        best = -np.inf
        target = -1
        for w in range(m):
            ask = salary[w] + eps if holder[w] != -1 else 0.0
            net = alpha[f, w] - ask
            if net > best:
                best = net
                target = w
        if best < 0.0:
            # Asks never fall, so a firm that declines once declines forever.
            retired[f] = True
            continue
        if holder[target] != -1:
            salary[target] += eps
            partner[holder[target]] = -1
        holder[target] = f
        partner[f] = target
    return partner, salary


def ck_auction(market: Market, eps: float) -> Allocation:
    """Ascending salary auction with bid increment ``eps``.

    Firms propose in turn, the lowest-indexed unmatched firm first, to the
    worker offering the best net value at her current asking salary (zero if
    nobody has hired her yet, otherwise her salary plus ``eps``). The result
    satisfies ``u[f] + v[w] >= alpha[f, w] - eps`` for every pair.
    """
    if not eps > 0 or not math.isfinite(eps):
        raise ValueError(f"eps must be a positive real, got {eps!r}")
    alpha = np.ascontiguousarray(market.alpha)
    partner, salary = _ascending_auction(alpha, float(eps))
    matching = Matching.from_firm_assignment(partner, market.n_workers)
    v = np.where(matching.worker_to_firm != UNMATCHED, salary, 0.0)
    return _complete(alpha, matching, v=v)


def dispersion(allocation: Allocation) -> tuple[float, float]:
    """Largest pairwise payoff gap among firms and among workers."""
    u, v = allocation.u, allocation.v
    du = float(u.max() - u.min()) if u.size else 0.0
    dv = float(v.max() - v.min()) if v.size else 0.0
    return du, dv


def core_vertices(market: Market) -> tuple[Matching, list[np.ndarray]]:
    """Vertices of the core in salary space, by exhaustive tight-set enumeration.

    Only for tiny markets (``n <= 3``, ``n + k <= 4``). Salaries of unmatched
    workers are fixed at zero and firm profits are implied by the splits, so
    the free variables are the salaries of matched workers.
    """
    if market.n > 3 or market.n_workers > 4:
        raise ValueError("vertex enumeration limited to n <= 3 and n + k <= 4")
    alpha = market.alpha
    n, m = alpha.shape
    matching, _ = brute_force_matching(market)
    f2w, w2f = matching.firm_to_worker, matching.worker_to_firm
    free = [w for w in range(m) if w2f[w] != UNMATCHED]
    col = {w: i for i, w in enumerate(free)}
    d = len(free)

    rows, rhs = [], []

    def add(coef: dict, bound: float):
        a = np.zeros(d)
        for w, c in coef.items():
            if w in col:
                a[col[w]] += c
        rows.append(a)
        rhs.append(bound)

    for w in free:
        add({w: -1.0}, 0.0)                                  # v_w >= 0
    for f in range(n):
        mw = f2w[f]
        if mw != UNMATCHED:
            add({mw: 1.0}, alpha[f, mw])                     # u_f >= 0
            for w in range(m):
                if w != mw:
                    add({mw: 1.0, w: -1.0}, alpha[f, mw] - alpha[f, w])
        else:
            for w in range(m):
                add({w: -1.0}, -alpha[f, w])
    A = np.array(rows).reshape(len(rows), d)
    b = np.array(rhs)

    if d == 0:
        return matching, [np.zeros(m)]
    found: list[np.ndarray] = []
    for subset in itertools.combinations(range(len(rows)), d):
        sub = A[list(subset)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(subset)])
        if np.all(A @ x <= b + 1e-10):
            if not any(np.allclose(x, y, atol=1e-12, rtol=0) for y in found):
                found.append(x)
    vertices = []
    for x in found:
        full = np.zeros(m)
        full[free] = x
        vertices.append(full)
    return matching, vertices


def brute_force_extremes(market: Market) -> tuple[Allocation, Allocation]:
    """Firm- and worker-optimal allocations found by vertex enumeration."""
    matching, vertices = core_vertices(market)
    sums = [math.fsum(x) for x in vertices]
    low = vertices[int(np.argmin(sums))]
    high = vertices[int(np.argmax(sums))]
    return (_complete(market.alpha, matching, v=low),
            _complete(market.alpha, matching, v=high))
