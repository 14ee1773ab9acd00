"""Maximum-weight matchings of a market and an exhaustive oracle for small ones."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .market import Market

UNMATCHED = -1
BRUTE_FORCE_LIMIT = 8


@dataclass(frozen=True, eq=False)
class Matching:
    """A partial bijection between firms and workers (``-1`` marks unmatched)."""

    firm_to_worker: np.ndarray
    worker_to_firm: np.ndarray

    def __post_init__(self):
        f2w = np.asarray(self.firm_to_worker, dtype=np.int64).copy()
        w2f = np.asarray(self.worker_to_firm, dtype=np.int64).copy()
        for f, w in enumerate(f2w):
            if w != UNMATCHED and not (0 <= w < len(w2f) and w2f[w] == f):
                raise ValueError(f"firm {f} -> worker {w} is not mirrored")
        for w, f in enumerate(w2f):
            if f != UNMATCHED and not (0 <= f < len(f2w) and f2w[f] == w):
                raise ValueError(f"worker {w} -> firm {f} is not mirrored")
        f2w.setflags(write=False)
        w2f.setflags(write=False)
        object.__setattr__(self, "firm_to_worker", f2w)
        object.__setattr__(self, "worker_to_firm", w2f)

    @classmethod
    def from_firm_assignment(cls, firm_to_worker, n_workers: int) -> "Matching":
        f2w = np.asarray(firm_to_worker, dtype=np.int64)
        w2f = np.full(n_workers, UNMATCHED, dtype=np.int64)
        for f, w in enumerate(f2w):
            if w == UNMATCHED:
                continue
            if not 0 <= w < n_workers:
                raise ValueError(f"worker index {w} out of range")
            if w2f[w] != UNMATCHED:
                raise ValueError(f"worker {w} assigned twice")
            w2f[w] = f
        return cls(f2w, w2f)

    def pairs(self) -> list[tuple[int, int]]:
        return [(f, int(w)) for f, w in enumerate(self.firm_to_worker) if w != UNMATCHED]

    def value(self, alpha: np.ndarray) -> float:
        """Correctly rounded total productivity of the matched pairs."""
        return math.fsum(alpha[f, w] for f, w in self.pairs())

    def __eq__(self, other):
        if not isinstance(other, Matching):
            return NotImplemented
        return (np.array_equal(self.firm_to_worker, other.firm_to_worker)
                and np.array_equal(self.worker_to_firm, other.worker_to_firm))

    __hash__ = None


@numba.njit(cache=True)
def _hungarian_min(cost):
    """Row-complete min-cost assignment of an ``n x m`` matrix with ``n <= m``.

    Shortest augmenting paths with row/column potentials; O(n^2 m). Returns
    the column of each row. Strict comparisons keep the lowest column index
    on ties.
    """
    n, m = cost.shape
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)      # p[j]: 1-based row holding column j
    way = np.zeros(m + 1, dtype=np.int64)
    minv = np.empty(m + 1)
    used = np.empty(m + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j] != 0:
            assign[p[j] - 1] = j - 1
    return assign


def _require_finite(alpha: np.ndarray):
    if not np.isfinite(alpha).all():
        raise ValueError("productivity matrix contains non-finite entries")


def _drop_negative_pairs(alpha: np.ndarray, f2w: np.ndarray) -> np.ndarray:
    # Pairs with negative productivity are better left unmatched.
    f2w = f2w.copy()
    for f, w in enumerate(f2w):
        if w != UNMATCHED and alpha[f, w] < 0.0:
            f2w[f] = UNMATCHED
    return f2w


def max_weight_matching(market: Market) -> tuple[Matching, float]:
    """Optimal matching and the grand-coalition value ``v(F u W)``."""
    alpha = market.alpha
    _require_finite(alpha)
    cost = -np.maximum(alpha, 0.0)
    f2w = _drop_negative_pairs(alpha, _hungarian_min(np.ascontiguousarray(cost)))
    matching = Matching.from_firm_assignment(f2w, market.n_workers)
    return matching, matching.value(alpha)


def _best_injection(values: np.ndarray) -> tuple[tuple[int, ...], float]:
    """Exhaustively maximise ``sum_i values[i, perm[i]]`` over injections, rows <= cols."""
    a, b = values.shape
    if a == 0:
        return (), 0.0
    perms = np.array(list(itertools.permutations(range(b), a)), dtype=np.int64)
    totals = values[np.arange(a), perms].sum(axis=1)
    best = totals.max()
    # Candidates within rounding of the max are re-scored exactly.
    chosen, chosen_value = None, -math.inf
    for idx in np.flatnonzero(totals >= best - 1e-9 * max(1.0, abs(best))):
        perm = tuple(int(x) for x in perms[idx])
        exact = math.fsum(values[i, perm[i]] for i in range(a))
        if exact > chosen_value:
            chosen, chosen_value = perm, exact
    return chosen, chosen_value


def brute_force_matching(market: Market) -> tuple[Matching, float]:
    """Exhaustive-enumeration counterpart of :func:`max_weight_matching` (n + k <= 8)."""
    if market.n > BRUTE_FORCE_LIMIT or market.n_workers > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} agents per side")
    alpha = market.alpha
    _require_finite(alpha)
    perm, _ = _best_injection(np.maximum(alpha, 0.0))
    f2w = _drop_negative_pairs(alpha, np.array(perm, dtype=np.int64))
    matching = Matching.from_firm_assignment(f2w, market.n_workers)
    return matching, matching.value(alpha)


def coalition_value(market: Market, firms, workers) -> float:
    """Value of the coalition made of the given firm and worker indices."""
    firms = sorted(set(int(f) for f in firms))
    workers = sorted(set(int(w) for w in workers))
    if len(firms) > BRUTE_FORCE_LIMIT or len(workers) > BRUTE_FORCE_LIMIT:
        raise ValueError(f"coalition enumeration limited to {BRUTE_FORCE_LIMIT} agents per side")
    if any(not 0 <= f < market.n for f in firms):
        raise IndexError("firm index out of range")
    if any(not 0 <= w < market.n_workers for w in workers):
        raise IndexError("worker index out of range")
    if not firms or not workers:
        return 0.0
    sub = np.maximum(market.alpha[np.ix_(firms, workers)], 0.0)
    if sub.shape[0] > sub.shape[1]:
        sub = sub.T
    return _best_injection(sub)[1]
