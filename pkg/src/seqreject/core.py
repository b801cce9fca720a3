"""Sequentially rejective procedures as fixed points of a successor function.

A procedure is run by starting from the empty rejected set and repeatedly
adding whatever the successor says can be rejected next, until nothing new
is added. Rejected sets are integer bitmasks over hypothesis ids
``0..n-1``.

Two deterministic verifiers are provided for critical-value schedules:

- :func:`check_monotonicity`: critical values never get harder to beat as
  the rejected set grows.
- :func:`check_single_step_bound`: for every admissible set of false
  hypotheses, the critical values of the hypotheses that can still be true
  sum to at most the level (the Bonferroni-Shaffer union bound).

Together with valid p-values these two properties give strong familywise
error control.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ._bits import bits, full

TOL = 1e-12

JUSTIFICATIONS = ("bonferroni-shaffer", "sidak", "simes", "permutation", "none")


class Successor:
    """Maps a rejected set to the hypotheses that can be rejected next.

    Subclasses implement :meth:`step`. ``n`` is the number of hypotheses.
    """

    n: int
    justification = "none"
    name = "successor"

    def step(self, rejected: int, evidence, level: float) -> tuple[int, dict[int, float]]:
        """Return ``(newly_rejected_mask, critical_values_used)``."""
        raise NotImplementedError

    def next(self, rejected: int, evidence, level: float) -> int:
        return self.step(rejected, evidence, level)[0]

    def check_evidence(self, evidence) -> None:
        size = len(np.asarray(evidence))
        if size != self.n:
            raise ValueError(
                f"evidence has {size} entries but the procedure has {self.n} hypotheses"
            )

    def first_level(self, rejected: int, evidence) -> float:
        """Smallest level at which ``next(rejected)`` is nonempty (capped at 1)."""
        from .adjusted import bisection_inverse

        return bisection_inverse(
            lambda lv: 1.0 if self.next(rejected, evidence, lv) else 0.0, 0.5
        )

    def run_batch(self, evidence_batch, level: float) -> np.ndarray:
        """Final rejected masks for each row of ``evidence_batch``."""
        return np.array(
            [run(self, ev, level).final for ev in evidence_batch], dtype=np.int64
        )


class Schedule(Successor):
    """Critical-value schedule ``alpha_H(R)``.

    With ``strict = False`` a hypothesis is rejected when ``p_H <= alpha_H(R)``
    and ``alpha_H(R) > 0``: a zero critical value means "not testable yet"
    and blocks even ``p = 0``. With ``strict = True`` the evidence holds
    statistics and ``S_H > k_H(R)`` rejects. ``alpha`` must be
    non-decreasing in ``level`` (non-increasing for strict schedules).
    """

    strict = False
    justification = "bonferroni-shaffer"
    data_dependent = False

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("a schedule needs at least one hypothesis")
        self.n = n

    def alpha(self, h: int, rejected: int, level: float, evidence=None) -> float:
        raise NotImplementedError

    def alphas(self, rejected: int, level: float, evidence=None) -> np.ndarray:
        return np.array(
            [self.alpha(h, rejected, level, evidence) for h in range(self.n)], dtype=float
        )

    def inverse(self, h: int, rejected: int, p: float, evidence=None) -> float:
        """Smallest level at which hypothesis ``h`` is rejected given ``rejected``."""
        from .adjusted import bisection_inverse

        if self.strict:
            return bisection_inverse(
                lambda lv: 1.0 if p > self.alpha(h, rejected, lv, evidence) else 0.0, 0.5
            )
        return bisection_inverse(lambda lv: self.alpha(h, rejected, lv, evidence), p)

    def observed(self, evidence) -> np.ndarray:
        return np.asarray(evidence, dtype=float)

    def step(self, rejected, evidence, level):
        thr = self.alphas(rejected, level, evidence)
        vals = self.observed(evidence)
        hit = vals > thr if self.strict else (vals <= thr) & (thr > 0)
        new = 0
        crit = {}
        for h in range(self.n):
            if rejected >> h & 1:
                continue
            crit[h] = float(thr[h])
            if hit[h]:
                new |= 1 << h
        return new, crit

    def first_level(self, rejected, evidence):
        vals = self.observed(evidence)
        remaining = [h for h in range(self.n) if not rejected >> h & 1]
        if not remaining:
            return 1.0
        return min(self.inverse(h, rejected, float(vals[h]), evidence) for h in remaining)

    def run_batch(self, evidence_batch, level):
        if self.data_dependent:
            return super().run_batch(evidence_batch, level)
        P = np.asarray(evidence_batch, dtype=float)
        if P.ndim != 2 or P.shape[1] != self.n:
            raise ValueError(f"expected a (reps, {self.n}) evidence array, got {P.shape}")
        return _batch_fixed_point(self, P, level)


def _batch_fixed_point(schedule: Schedule, P: np.ndarray, level: float) -> np.ndarray:
    """Vectorized fixed-point iteration for evidence-independent schedules."""
    B, n = P.shape
    shifts = np.arange(n, dtype=np.int64)
    weights = np.int64(1) << shifts
    done_mask = full(n)
    R = np.zeros(B, dtype=np.int64)
    active = np.ones(B, dtype=bool)
    cache: dict[int, np.ndarray] = {}
    while True:
        idx = np.flatnonzero(active)
        if idx.size == 0:
            return R
        Ra = R[idx]
        uniq, inv = np.unique(Ra, return_inverse=True)
        table = np.empty((uniq.size, n))
        for row, u in enumerate(uniq.tolist()):
            if u not in cache:
                cache[u] = schedule.alphas(u, level)
            table[row] = cache[u]
        thr = table[inv]
        free_bits = ((Ra[:, None] >> shifts) & 1) == 0
        if schedule.strict:
            hit = P[idx] > thr
        else:
            hit = (P[idx] <= thr) & (thr > 0)
        new = (hit & free_bits) @ weights
        R[idx] = Ra | new
        stop = (new == 0) | (R[idx] == done_mask)
        active[idx[stop]] = False


@dataclass(frozen=True)
class Step:
    rejected: int
    new: int
    critical: dict[int, float]


@dataclass(frozen=True)
class ProcedureTrace:
    """The chain ``R_0 = {} < R_1 < ... `` produced by :func:`run`."""

    n: int
    steps: tuple[Step, ...]
    final: int
    level: float
    start: int = 0
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def final_set(self) -> frozenset[int]:
        return frozenset(bits(self.final))

    @property
    def productive_steps(self) -> int:
        return sum(1 for s in self.steps if s.new)

    def to_dict(self, labels: Sequence[str] | None = None) -> dict:
        name = (lambda h: labels[h]) if labels is not None else (lambda h: h)
        return {
            "n": self.n,
            "level": self.level,
            "start": [name(h) for h in bits(self.start)],
            "steps": [
                {
                    "rejected_before": [name(h) for h in bits(s.rejected)],
                    "newly_rejected": [name(h) for h in bits(s.new)],
                    "critical_values": {str(name(h)): v for h, v in s.critical.items()},
                }
                for s in self.steps
            ],
            "final": [name(h) for h in bits(self.final)],
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: dict, labels: Sequence[str] | None = None) -> "ProcedureTrace":
        if labels is not None:
            index = {lab: i for i, lab in enumerate(labels)}
            ident = lambda x: index[x]  # noqa: E731
        else:
            ident = int

        def mask(items):
            m = 0
            for x in items:
                m |= 1 << ident(x)
            return m

        steps = tuple(
            Step(
                rejected=mask(s["rejected_before"]),
                new=mask(s["newly_rejected"]),
                critical={ident(k): float(v) for k, v in s["critical_values"].items()},
            )
            for s in data["steps"]
        )
        return cls(
            n=int(data["n"]),
            steps=steps,
            final=mask(data["final"]),
            level=float(data["level"]),
            start=mask(data.get("start", [])),
            metadata=dict(data.get("metadata", {})),
        )


def run(successor: Successor, evidence, level: float, start: int = 0) -> ProcedureTrace:
    """Iterate ``R_{i+1} = R_i | N(R_i)`` from ``start`` until a fixed point.

    Every currently eligible hypothesis is rejected in the same step. The
    last recorded step is the unproductive one that detects the fixed point,
    unless everything has been rejected.
    """
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"level must lie in [0, 1], got {level}")
    successor.check_evidence(evidence)
    everything = full(successor.n)
    R = start
    steps = []
    while R != everything:
        new, crit = successor.step(R, evidence, level)
        new &= ~R
        steps.append(Step(R, new, crit))
        if not new:
            break
        R |= new
    return ProcedureTrace(successor.n, tuple(steps), R, level, start)


def run_batch(successor: Successor, evidence_batch, level: float) -> np.ndarray:
    return successor.run_batch(evidence_batch, level)


@dataclass(frozen=True)
class Verdict:
    """Outcome of a deterministic check: ``ok``, ``violation`` or ``not-applicable``."""

    status: str
    witness: tuple | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def __bool__(self) -> bool:
        return self.ok


def _violates(schedule: Schedule, before: float, after: float) -> bool:
    if schedule.strict:
        return after > before + TOL
    return before > after + TOL


def check_monotonicity(
    schedule: Schedule,
    structure=None,
    level: float = 0.05,
    evidence=None,
    sampled: int | None = None,
    seed: int | None = None,
) -> Verdict:
    """Check that critical values never get harder to beat as rejections accumulate.

    For p-value schedules this is ``alpha_H(R) <= alpha_H(S)`` for every
    ``R <= S`` and ``H`` outside ``S`` (for strict schedules ``k_H(R) >= k_H(S)``).
    The exhaustive mode checks all pairs ``S = R | {j}``, which implies the
    inequality for every nested pair by chaining. Violations are reported as
    ``(R, S, H)`` and the first one in (R, j, H) order is returned.

    ``sampled`` switches to a random check of that many nested pairs.
    """
    n = schedule.n
    if structure is not None and structure.n != n:
        raise ValueError("structure and schedule disagree on the number of hypotheses")
    if sampled is not None:
        return _sampled_monotonicity(schedule, level, evidence, sampled, seed)
    if n > 20:
        raise ValueError("exhaustive monotonicity check needs n <= 20; pass sampled=")
    if n <= 16:
        return _table_monotonicity(schedule, level, evidence)
    for R in range(1 << n):
        a = schedule.alphas(R, level, evidence)
        for j in range(n):
            if R >> j & 1:
                continue
            S = R | (1 << j)
            b = schedule.alphas(S, level, evidence)
            for h in range(n):
                if not S >> h & 1 and _violates(schedule, a[h], b[h]):
                    return Verdict("violation", (R, S, h))
    return Verdict("ok")


def _table_monotonicity(schedule, level, evidence) -> Verdict:
    n = schedule.n
    size = 1 << n
    table = np.empty((size, n))
    for R in range(size):
        table[R] = schedule.alphas(R, level, evidence)
    masks = np.arange(size, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    best = None
    for j in range(n):
        Rs = masks[~member[:, j]]
        Ss = Rs | (1 << j)
        before, after = table[Rs], table[Ss]
        if schedule.strict:
            bad = after > before + TOL
        else:
            bad = before > after + TOL
        bad &= ~member[Ss]
        rows, hs = np.nonzero(bad)
        if rows.size:
            cand = (int(Rs[rows[0]]), j, int(hs[0]))
            if best is None or cand < best:
                best = cand
    if best is None:
        return Verdict("ok")
    R, j, h = best
    return Verdict("violation", (R, R | (1 << j), h))


def _sampled_monotonicity(schedule, level, evidence, budget, seed) -> Verdict:
    rng = np.random.default_rng(seed)
    n = schedule.n
    for _ in range(budget):
        inside = rng.random(n) < 0.5
        outside = np.flatnonzero(~inside)
        if outside.size == 0:
            continue
        h = int(rng.choice(outside))
        S = int(sum(1 << int(i) for i in np.flatnonzero(inside)))
        keep = rng.random(n) < 0.5
        R = S & int(sum(1 << int(i) for i in np.flatnonzero(keep)))
        a = schedule.alpha(h, R, level, evidence)
        b = schedule.alpha(h, S, level, evidence)
        if _violates(schedule, a, b):
            return Verdict("violation", (R, S, h), detail=f"sampled, seed={seed}")
    return Verdict("ok", detail=f"sampled {budget} pairs, seed={seed}")


def check_single_step_bound(schedule: Schedule, structure, level: float = 0.05) -> Verdict:
    """Check the Bonferroni-Shaffer union bound for every admissible false set.

    For every ``R`` that can be the set of false hypotheses and every atom
    whose true hypotheses avoid ``R``, the critical values of those true
    hypotheses must sum to at most ``level`` (plus 1e-12). Schedules that
    justify their single step differently get a ``not-applicable`` verdict.
    """
    if schedule.justification != "bonferroni-shaffer":
        return Verdict(
            "not-applicable",
            detail=f"schedule justifies its single step by {schedule.justification!r}",
        )
    n = schedule.n
    if structure.n != n:
        raise ValueError("structure and schedule disagree on the number of hypotheses")
    if structure.is_free:
        if n > 20:
            raise ValueError("free structures above 20 hypotheses cannot be enumerated")
        # alphas are nonnegative, so the largest true set H \ R dominates
        for R in range(1 << n):
            T = full(n) & ~R
            a = schedule.alphas(R, level)
            total = float(sum(a[h] for h in bits(T)))
            if total > level + TOL:
                return Verdict("violation", (R, T), detail=f"sum={total!r}")
        return Verdict("ok")
    atoms = np.array(structure.atoms, dtype=np.int64)
    member = ((atoms[:, None] >> np.arange(n)) & 1).astype(float)
    for R in sorted(structure.false_sets()):
        a = schedule.alphas(R, level)
        a = np.where(np.isfinite(a), a, 0.0)
        sums = member @ a
        valid = (atoms & R) == 0
        bad = np.flatnonzero(valid & (sums > level + TOL))
        if bad.size:
            k = int(bad[0])
            return Verdict("violation", (R, int(atoms[k])), detail=f"sum={sums[k]!r}")
    return Verdict("ok")


def check_relaxed_monotonicity(schedule: Schedule, trace: ProcedureTrace, evidence=None) -> Verdict:
    """Check that critical values never tighten along one realized path.

    This weaker, path-wise condition is *not* sufficient for familywise error
    control; it exists to demonstrate that with the negative-control
    procedure in :mod:`seqreject.simulation`.
    """
    for a, b in itertools.pairwise(trace.steps):
        for h, before in a.critical.items():
            if h in b.critical and _violates(schedule, before, b.critical[h]):
                return Verdict("violation", (a.rejected, b.rejected, h))
    return Verdict("ok")
