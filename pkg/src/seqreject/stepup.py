"""Step-up procedures recast as sequentially rejective procedures.

An :class:`OrderedCriticalValues` object supplies, for the current rejected
set ``R``, a non-increasing sequence ``alpha_1(R) >= alpha_2(R) >= ...``
for the ``m = |H \\ R|`` remaining hypotheses. One step of the successor
sorts the remaining p-values from largest to smallest, finds the first
position ``k`` with ``p_(k) <= alpha_k(R)`` and rejects every remaining
hypothesis whose p-value is at most ``p_(k)``.

Validity of the single step rests on the Simes inequality for the true
nulls. That is an assumption about the joint distribution that the caller
makes; it is recorded on the successor, never checked from data.
"""

from __future__ import annotations

import numpy as np

from ._bits import full, popcount
from .core import TOL, Successor
from .logic import LogicalStructure


class OrderedCriticalValues:
    """``alpha_i(R) = level / c_i(R)`` with non-decreasing divisors ``c_i``.

    A divisor of 0 stands for critical value 1.
    """

    name = "ordered"

    def divisors(self, rejected: int, m: int) -> np.ndarray:
        raise NotImplementedError

    def alphas(self, rejected: int, level: float, m: int) -> np.ndarray:
        c = self.divisors(rejected, m).astype(float)
        out = np.ones(m)
        pos = c > 0
        out[pos] = level / c[pos]
        return out

    def inverse(self, i: int, rejected: int, p: float, m: int) -> float:
        """Smallest level with ``p <= alpha_i(R)`` (``i`` is 1-based)."""
        c = self.divisors(rejected, m)[i - 1]
        return 0.0 if c == 0 else min(1.0, p * float(c))


class Hochberg(OrderedCriticalValues):
    """``alpha_i = level / min(i, k_bound)``; plain Hochberg when unbounded."""

    name = "hochberg"

    def __init__(self, k_bound: int | None = None):
        if k_bound is not None and k_bound < 1:
            raise ValueError(f"k_bound must be at least 1, got {k_bound}")
        self.k_bound = k_bound

    def divisors(self, rejected, m):
        i = np.arange(1, m + 1)
        return i if self.k_bound is None else np.minimum(i, self.k_bound)


class ShafferStepUp(OrderedCriticalValues):
    """``alpha_i(R) = level / min(i, D(R))``, ``D`` the largest possible true set."""

    name = "shaffer-stepup"

    def __init__(self, structure: LogicalStructure):
        self.structure = structure

    def divisors(self, rejected, m):
        d = self.structure.max_true_count(rejected)
        return np.minimum(np.arange(1, m + 1), d)


def hochberg(k_bound: int | None = None) -> Hochberg:
    return Hochberg(k_bound)


def shaffer_stepup(structure: LogicalStructure) -> ShafferStepUp:
    return ShafferStepUp(structure)


class StepUpSuccessor(Successor):
    """Successor built from ordered critical values; see the module docstring."""

    justification = "simes"
    assumption = "Simes inequality for the true null p-values"

    def __init__(self, n: int, values: OrderedCriticalValues):
        if n < 1:
            raise ValueError("a procedure needs at least one hypothesis")
        self.n = n
        self.values = values
        self.name = values.name

    def _order(self, rejected, p):
        remaining = [h for h in range(self.n) if not rejected >> h & 1]
        # descending p, ties broken by hypothesis index
        return sorted(remaining, key=lambda h: (-p[h], h))

    def step(self, rejected, evidence, level):
        p = np.asarray(evidence, dtype=float)
        order = self._order(rejected, p)
        if not order:
            return 0, {}
        thr = self.values.alphas(rejected, level, len(order))
        crit = {h: float(thr[i]) for i, h in enumerate(order)}
        for i, h in enumerate(order):
            if p[h] <= thr[i] and thr[i] > 0:
                cut = p[h]
                new = 0
                for j in order:
                    if p[j] <= cut:
                        new |= 1 << j
                return new, crit
        return 0, crit

    def first_level(self, rejected, evidence):
        p = np.asarray(evidence, dtype=float)
        order = self._order(rejected, p)
        if not order:
            return 1.0
        m = len(order)
        return min(self.values.inverse(i + 1, rejected, p[h], m) for i, h in enumerate(order))

    def run_batch(self, evidence_batch, level):
        P = np.asarray(evidence_batch, dtype=float)
        if P.ndim != 2 or P.shape[1] != self.n:
            raise ValueError(f"expected a (reps, {self.n}) evidence array, got {P.shape}")
        B, n = P.shape
        shifts = np.arange(n, dtype=np.int64)
        weights = np.int64(1) << shifts
        R = np.zeros(B, dtype=np.int64)
        active = np.ones(B, dtype=bool)
        cache: dict[int, np.ndarray] = {}
        while True:
            idx = np.flatnonzero(active)
            if idx.size == 0:
                return R
            Ra = R[idx]
            free_bits = ((Ra[:, None] >> shifts) & 1) == 0
            key = np.where(free_bits, -P[idx], np.inf)
            order = np.argsort(key, axis=1, kind="stable")
            sorted_p = np.take_along_axis(np.where(free_bits, P[idx], np.inf), order, axis=1)
            uniq, inv = np.unique(Ra, return_inverse=True)
            table = np.full((uniq.size, n), -np.inf)
            for row, u in enumerate(uniq.tolist()):
                if u not in cache:
                    m = n - popcount(u)
                    t = np.full(n, -np.inf)
                    t[:m] = self.values.alphas(u, level, m)
                    cache[u] = t
                table[row] = cache[u]
            thr = table[inv]
            hit = (sorted_p <= thr) & (thr > 0)
            any_hit = hit.any(axis=1)
            first = np.argmax(hit, axis=1)
            cut = np.where(any_hit, sorted_p[np.arange(idx.size), first], -np.inf)
            new = ((P[idx] <= cut[:, None]) & free_bits) @ weights
            R[idx] = Ra | new
            stop = (new == 0) | (R[idx] == full(n))
            active[idx[stop]] = False


def stepup_successor(n: int, values: OrderedCriticalValues) -> StepUpSuccessor:
    return StepUpSuccessor(n, values)


def check_ordered_monotonicity(values: OrderedCriticalValues, n: int, level: float = 0.05):
    """Exhaustively check ``alpha_i(S) >= alpha_i(R)`` for ``R <= S``, ``i <= |H \\ S|``.

    Returns ``None`` when the condition holds and a witness ``(R, S, i)``
    otherwise. Pairs ``S = R | {j}`` suffice by chaining.
    """
    for R in range(1 << n):
        a = values.alphas(R, level, n - popcount(R))
        for j in range(n):
            if R >> j & 1:
                continue
            S = R | (1 << j)
            m = n - popcount(S)
            b = values.alphas(S, level, m)
            for i in range(m):
                if a[i] > b[i] + TOL:
                    return R, S, i + 1
    return None
