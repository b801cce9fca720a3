"""Multiplicity-adjusted p-values for sequentially rejective procedures.

The adjusted p-value of a hypothesis is the smallest level at which the
whole procedure rejects it. Because the rejected set at a smaller level is
always contained in the rejected set at a larger one, the procedure can be
resumed from the previous final set each time the level is raised, so the
full report costs at most one engine run per distinct breakpoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._bits import bits, full
from .core import Successor, run

_MAX_BUMPS = 64
# first level tried above 0, for p-values that are exactly 0
_SMALLEST = float(np.finfo(float).tiny)


def bisection_inverse(alpha_fn: Callable[[float], float], p: float, tol: float = 1e-10) -> float:
    """Smallest level ``l`` in [0, 1] with ``p <= alpha_fn(l)``, to within ``tol``.

    ``alpha_fn`` must be non-decreasing in the level. A critical value of 0
    never rejects. Returns 1 when even ``alpha_fn(1)`` does not reject. The
    returned level always rejects, except for that fallback value 1.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")

    def rejects(level):
        a = alpha_fn(level)
        return a > 0 and p <= a

    if rejects(0.0):
        return 0.0
    if not rejects(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rejects(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class AdjustedReport:
    """Adjusted p-values together with the breakpoints that produced them.

    Attributes
    ----------
    adjusted : ndarray
        One adjusted p-value per hypothesis, in [0, 1].
    breakpoints : tuple of float
        Increasing levels at which new hypotheses enter the rejected set.
    finals : tuple of int
        Rejected set (bitmask) at each breakpoint; nested and increasing.
    labels : tuple of str or None
    """

    adjusted: np.ndarray
    breakpoints: tuple[float, ...]
    finals: tuple[int, ...]
    labels: tuple[str, ...] | None = None

    def rejected_at(self, level: float) -> int:
        return sum(1 << h for h in range(len(self.adjusted)) if self.adjusted[h] <= level)

    def to_rows(self, raw: Sequence[float], level: float) -> list[dict]:
        labels = self.labels or tuple(f"H{i + 1}" for i in range(len(self.adjusted)))
        return [
            {
                "label": labels[h],
                "raw_p": float(raw[h]),
                "adjusted_p": float(self.adjusted[h]),
                "rejected_at_alpha": bool(self.adjusted[h] <= level),
            }
            for h in range(len(self.adjusted))
        ]


def adjusted_pvalues(
    successor: Successor, evidence, labels: Sequence[str] | None = None
) -> AdjustedReport:
    """Adjusted p-values by warm-started breakpoint iteration.

    At each round the next breakpoint is the smallest level at which a
    not-yet-rejected hypothesis becomes rejectable from the current rejected
    set (never below the previous breakpoint). The engine is then run at
    that level starting from the current set, and everything it adds gets
    the breakpoint as its adjusted p-value. Hypotheses left when the
    breakpoint reaches 1 get 1.

    Raises
    ------
    ValueError
        If the inverse reported by the procedure does not actually lead to a
        rejection, which means the procedure is not monotone in the level.
    """
    successor.check_evidence(evidence)
    n = successor.n
    everything = full(n)
    adjusted = np.ones(n)
    breakpoints: list[float] = []
    finals: list[int] = []
    R = 0
    prev = 0.0
    while R != everything:
        level = max(prev, min(1.0, float(successor.first_level(R, evidence))))
        if level >= 1.0:
            break
        final = run(successor, evidence, level, start=R).final
        bumps = 0
        while final == R:
            # the inverse can sit a rounding error below the true breakpoint
            if bumps == _MAX_BUMPS:
                raise ValueError(
                    f"inverse inconsistent: nothing rejected at level {level!r} "
                    f"from rejected set {sorted(bits(R))}"
                )
            level = max(float(np.nextafter(level, 2.0)), _SMALLEST)
            if level >= 1.0:
                break
            final = run(successor, evidence, level, start=R).final
            bumps += 1
        if final == R:
            break
        for h in bits(final & ~R):
            adjusted[h] = level
        breakpoints.append(level)
        finals.append(final)
        R = final
        prev = level
    return AdjustedReport(
        adjusted=adjusted,
        breakpoints=tuple(breakpoints),
        finals=tuple(finals),
        labels=tuple(labels) if labels is not None else None,
    )
