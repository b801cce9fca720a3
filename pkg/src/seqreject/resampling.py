"""Exact step-down max-T testing with a group of null-invariant transformations.

For a group of ``r`` transformations ``g_1..g_r`` of the data, let ``M_i(R)``
be the largest statistic among unrejected hypotheses after applying
``g_i``. The critical value is the ``s``-th smallest of the ``M_i(R)`` with
``s = r - floor(level * r)``, and a hypothesis is rejected when its observed
statistic is *strictly* larger. Because a maximum over fewer hypotheses can
only be smaller, the critical values shrink as rejections accumulate, which
is the monotonicity the step-down needs.

Transformations act on the rows of an ``(n, p)`` data matrix: an element is
a pair ``(perm, signs)`` mapping ``X`` to ``signs[:, None] * X[perm]``.
User-supplied elements may also be arbitrary callables.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from ._bits import full
from .core import ProcedureTrace, Schedule, Verdict, run

MAX_ENUMERATED = 1 << 16

# floor(level * r) must not lose a whole unit to rounding when level * r is
# an integer in exact arithmetic (e.g. 0.3 * 10 = 2.9999999999999996)
_FLOOR_SLACK = 1e-9


def quantile_index(r: int, level: float) -> int:
    """``s = r - floor(level * r)``: rank of the critical value among ``r`` maxima."""
    if r < 1:
        raise ValueError("group size must be at least 1")
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"level must lie in [0, 1], got {level}")
    return r - math.floor(level * r + _FLOOR_SLACK)


@dataclass
class TransformGroup:
    """A finite set of data transformations, usually a group.

    Attributes
    ----------
    kind : str
        ``"signflip"``, ``"permutation"`` or ``"user"``.
    perms : ndarray of int, shape (r, n) or None
    signs : ndarray, shape (r, n) or None
    funcs : list of callables or None
        Only for user groups given as functions.
    sampled : dict or None
        ``{"seed", "sample_size", "include_identity"}`` for random subsets.
    """

    kind: str
    n: int
    perms: np.ndarray | None = None
    signs: np.ndarray | None = None
    funcs: list[Callable] | None = None
    sampled: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        if self.funcs is not None:
            return len(self.funcs)
        return len(self.perms)

    @property
    def is_sampled(self) -> bool:
        return self.sampled is not None

    def apply(self, X: np.ndarray, i: int) -> np.ndarray:
        if self.funcs is not None:
            return np.asarray(self.funcs[i](X), dtype=float)
        return self.signs[i][:, None] * X[self.perms[i]]

    def transform_all(self, X: np.ndarray, chunk: slice | None = None) -> np.ndarray:
        """All transformed copies of ``X`` (shape ``(..., n, p)``), stacked on axis -3."""
        X = np.asarray(X, dtype=float)
        if self.funcs is not None:
            funcs = self.funcs if chunk is None else self.funcs[chunk]
            return np.stack([np.asarray(f(X), dtype=float) for f in funcs], axis=-3)
        perms = self.perms if chunk is None else self.perms[chunk]
        signs = self.signs if chunk is None else self.signs[chunk]
        return X[..., perms, :] * signs[..., None]

    def describe(self) -> dict:
        out = {"kind": self.kind, "n": self.n, "order": self.order}
        if self.sampled:
            out["sampled"] = dict(self.sampled)
        out.update(self.meta)
        return out


def sign_flip_group(
    n: int, sample: int | None = None, seed: int | None = None, include_identity: bool = True
) -> TransformGroup:
    """All ``2**n`` sign flips of the rows, or a random sample of them."""
    if n < 1:
        raise ValueError("need at least one observation")
    perm = np.tile(np.arange(n), (1, 1))
    if sample is None:
        if n > 16:
            raise ValueError(f"2**{n} sign flips is too many to enumerate; pass sample=")
        codes = np.arange(1 << n)[:, None]
        signs = 1.0 - 2.0 * ((codes >> np.arange(n)) & 1)
        return TransformGroup("signflip", n, np.repeat(perm, len(signs), axis=0), signs)
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=(sample, n))
    if include_identity:
        signs[0] = 1.0
    return TransformGroup(
        "signflip",
        n,
        np.repeat(perm, sample, axis=0),
        signs,
        sampled={"seed": seed, "sample_size": sample, "include_identity": include_identity},
    )


def two_sample_permutation_group(
    n: int,
    m: int,
    sample: int | None = None,
    seed: int | None = None,
    include_identity: bool = True,
) -> TransformGroup:
    """All ``(n+m)!`` row permutations, or a random sample of them."""
    N = n + m
    if n < 1 or m < 1:
        raise ValueError("both samples need at least one observation")
    if sample is None:
        if math.factorial(N) > MAX_ENUMERATED:
            raise ValueError(f"{N}! permutations is too many to enumerate; pass sample=")
        perms = np.array(list(itertools.permutations(range(N))), dtype=np.intp)
        return TransformGroup("permutation", N, perms, np.ones(perms.shape), meta={"sizes": [n, m]})
    rng = np.random.default_rng(seed)
    perms = np.array([rng.permutation(N) for _ in range(sample)], dtype=np.intp)
    if include_identity:
        perms[0] = np.arange(N)
    return TransformGroup(
        "permutation",
        N,
        perms,
        np.ones(perms.shape),
        sampled={"seed": seed, "sample_size": sample, "include_identity": include_identity},
        meta={"sizes": [n, m]},
    )


def user_group(elements: Sequence, n: int | None = None) -> TransformGroup:
    """Group from explicit elements.

    Each element is a permutation (sequence of row indices), a
    ``(perm, signs)`` pair, or a callable mapping a data matrix to a data
    matrix of the same shape. Callables cannot be mixed with the other forms.
    """
    elements = list(elements)
    if not elements:
        raise ValueError("a group needs at least one element")
    if all(callable(e) for e in elements):
        if n is None:
            raise ValueError("pass n for groups given as functions")
        return TransformGroup("user", n, funcs=elements)
    perms, signs = [], []
    for e in elements:
        if isinstance(e, tuple) and len(e) == 2:
            p, s = np.asarray(e[0], dtype=np.intp), np.asarray(e[1], dtype=float)
        else:
            p = np.asarray(e, dtype=np.intp)
            s = np.ones(p.shape)
        perms.append(p)
        signs.append(s)
    size = len(perms[0])
    for p, s in zip(perms, signs):
        if p.shape != (size,) or s.shape != (size,):
            raise ValueError("group elements act on different numbers of rows")
        if sorted(p.tolist()) != list(range(size)):
            raise ValueError(f"{p.tolist()} is not a permutation of 0..{size - 1}")
        if not np.all(np.abs(s) == 1):
            raise ValueError("signs must be +1 or -1")
    if n is not None and n != size:
        raise ValueError(f"elements act on {size} rows, expected {n}")
    return TransformGroup("user", size, np.array(perms), np.array(signs))


def verify_group(group: TransformGroup, probe_seed: int = 0) -> Verdict:
    """Check that the transformations are closed under composition and contain the identity.

    Built-in enumerated groups are groups by construction. User groups are
    checked by their action on a random probe matrix, which identifies
    elements with probability one. A finite set of bijections that is closed
    under composition also contains every inverse. Sampled subsets are not
    groups and get ``not-applicable``.
    """
    if group.is_sampled:
        return Verdict("not-applicable", detail="randomly sampled transformations")
    if group.kind in ("signflip", "permutation"):
        return Verdict("ok", detail=f"order {group.order}, closed by construction")
    r = group.order
    if r > 10_000:
        raise ValueError("group too large to verify pairwise")
    rng = np.random.default_rng(probe_seed)
    probe = rng.standard_normal((group.n, 2))
    images = [group.apply(probe, i) for i in range(r)]

    def key(a):
        return np.round(a, 9).tobytes()

    known = {key(img): i for i, img in enumerate(images)}
    if len(known) != r:
        return Verdict("violation", detail="two elements act identically")
    if key(probe) not in known:
        return Verdict("violation", detail="identity missing")
    for a in range(r):
        for b in range(r):
            if group.funcs is not None:
                composed = np.asarray(group.funcs[b](images[a]), dtype=float)
            else:
                composed = group.apply(images[a], b)
            if key(composed) not in known:
                return Verdict("violation", witness=(a, b), detail=f"g{b} after g{a} not in group")
    return Verdict("ok", detail=f"order {r}")


# Statistics act on arrays of shape (..., n, p) and return (..., p), so one
# call handles every transformed copy at once. Larger means more evidence.


def mean_statistic(X):
    return np.asarray(X).mean(axis=-2)


def t_statistic(X):
    X = np.asarray(X)
    n = X.shape[-2]
    sd = X.std(axis=-2, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(sd > 0, X.mean(axis=-2) / (sd / np.sqrt(n)), 0.0)


class TwoSampleStatistic:
    """Difference of group means (group 1 minus group 0), optionally studentized."""

    def __init__(self, labels: Sequence[int], studentize: bool = False):
        lab = np.asarray(labels)
        kinds = np.unique(lab)
        if kinds.size != 2:
            raise ValueError(f"two-sample statistic needs exactly two groups, got {kinds.tolist()}")
        self.second = lab == kinds[1]
        self.studentize = studentize

    def __call__(self, X):
        X = np.asarray(X)
        a, b = X[..., ~self.second, :], X[..., self.second, :]
        diff = b.mean(axis=-2) - a.mean(axis=-2)
        if not self.studentize:
            return diff
        se = np.sqrt(a.var(axis=-2, ddof=1) / a.shape[-2] + b.var(axis=-2, ddof=1) / b.shape[-2])
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, diff / se, 0.0)


def two_sided(stat: Callable) -> Callable:
    def wrapped(X):
        return np.abs(stat(X))

    wrapped.__name__ = f"abs_{getattr(stat, '__name__', 'stat')}"
    return wrapped


STATISTICS = {"mean": mean_statistic, "t": t_statistic}


def transformed_statistics(stat: Callable, data, group: TransformGroup, chunk: int = 4096) -> np.ndarray:
    """Statistics of every transformed copy of ``data``: shape ``(r, p)``."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be a 2-d (observations, variables) matrix")
    if X.shape[0] != group.n:
        raise ValueError(f"group acts on {group.n} rows, data has {X.shape[0]}")
    out = []
    for start in range(0, group.order, chunk):
        block = group.transform_all(X, slice(start, start + chunk))
        vals = np.asarray(stat(block), dtype=float)
        if vals.shape != (block.shape[0], X.shape[1]):
            raise ValueError(f"statistic returned shape {vals.shape} for a stack of {block.shape}")
        out.append(vals)
    return np.concatenate(out, axis=0)


@dataclass(frozen=True)
class PermutationEvidence:
    """Observed statistics plus their values under every group element."""

    observed: np.ndarray
    transformed: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return len(self.observed)


def permutation_evidence(stat: Callable, data, group: TransformGroup) -> PermutationEvidence:
    X = np.asarray(data, dtype=float)
    observed = np.asarray(stat(X), dtype=float)
    M = transformed_statistics(stat, X, group)
    return PermutationEvidence(observed, M, {"group": group.describe()})


def critical_value(transformed: np.ndarray, rejected: int, level: float) -> float:
    """``s``-th smallest over group elements of the max statistic among unrejected hypotheses."""
    M = np.asarray(transformed, dtype=float)
    remaining = [h for h in range(M.shape[1]) if not rejected >> h & 1]
    if not remaining:
        raise ValueError("empty remaining set")
    maxima = M[:, remaining].max(axis=1)
    s = quantile_index(len(maxima), level)
    if s == 0:
        return -np.inf
    return float(np.partition(maxima, s - 1)[s - 1])


class MaxTSchedule(Schedule):
    """Random critical values ``k(R)``, the same for every unrejected hypothesis."""

    strict = True
    justification = "permutation"
    data_dependent = True
    name = "maxT"
    assumption = "the group leaves the joint law of the true-null statistics unchanged"

    def check_evidence(self, evidence):
        if not isinstance(evidence, PermutationEvidence):
            raise TypeError("max-T procedures need PermutationEvidence")
        if len(evidence.observed) != self.n or evidence.transformed.shape[1] != self.n:
            raise ValueError(
                f"evidence has {len(evidence.observed)} statistics but the procedure has "
                f"{self.n} hypotheses"
            )

    def observed(self, evidence):
        return evidence.observed

    def alpha(self, h, rejected, level, evidence=None):
        return critical_value(evidence.transformed, rejected & ~(1 << h), level)

    def alphas(self, rejected, level, evidence=None):
        if rejected == full(self.n):
            return np.full(self.n, np.inf)
        return np.full(self.n, critical_value(evidence.transformed, rejected, level))

    def inverse(self, h, rejected, p, evidence=None):
        """Closed form: the fraction of group maxima at least as large as ``S_h``."""
        M = evidence.transformed
        remaining = [j for j in range(self.n) if not rejected >> j & 1 or j == h]
        maxima = M[:, remaining].max(axis=1)
        return min(1.0, float(np.count_nonzero(maxima >= p)) / len(maxima))


def maxT_schedule(n: int) -> MaxTSchedule:
    return MaxTSchedule(n)


def stepdown_maxT(
    stat: Callable, data, group: TransformGroup, level: float, debug: bool = False
) -> ProcedureTrace:
    """Step-down max-T test of every column of ``data``.

    With ``debug=True`` the critical values are asserted to be non-increasing
    along the trace.
    """
    evidence = permutation_evidence(stat, data, group)
    schedule = MaxTSchedule(len(evidence.observed))
    trace = run(schedule, evidence, level)
    if debug:
        ks = [min(s.critical.values()) for s in trace.steps if s.critical]
        for a, b in itertools.pairwise(ks):
            assert b <= a, f"critical value rose from {a} to {b}"
    meta = {
        "group": group.describe(),
        "statistic": getattr(stat, "__name__", type(stat).__name__),
        "assumption": schedule.assumption,
    }
    return ProcedureTrace(trace.n, trace.steps, trace.final, level, trace.start, meta)


class MaxTProcedure:
    """Vectorized step-down max-T over many simulated data sets.

    ``run_batch`` takes data of shape ``(reps, n, p)`` and returns final
    rejected masks.
    """

    justification = "permutation"

    def __init__(self, stat: Callable, group: TransformGroup, chunk: int = 2048):
        self.stat = stat
        self.group = group
        self.chunk = chunk
        self.name = "maxT"

    def run_batch(self, data_batch, level: float) -> np.ndarray:
        X = np.asarray(data_batch, dtype=float)
        if X.ndim != 3 or X.shape[1] != self.group.n:
            raise ValueError(f"expected (reps, {self.group.n}, p) data, got {X.shape}")
        # keep each transformed block around a few million numbers
        per_rep = self.group.order * X.shape[1] * X.shape[2]
        step = max(1, min(self.chunk, 4_000_000 // per_rep))
        out = []
        for start in range(0, X.shape[0], step):
            out.append(self._block(X[start : start + step], level))
        return np.concatenate(out)

    def _block(self, X, level):
        B, _, p = X.shape
        observed = np.asarray(self.stat(X))
        M = np.asarray(self.stat(self.group.transform_all(X)))  # (B, r, p)
        r = M.shape[1]
        s = quantile_index(r, level)
        weights = np.int64(1) << np.arange(p, dtype=np.int64)
        remaining = np.ones((B, p), dtype=bool)
        for _ in range(p):
            masked = np.where(remaining[:, None, :], M, -np.inf)
            maxima = masked.max(axis=2)
            k = np.full(B, -np.inf) if s == 0 else np.partition(maxima, s - 1, axis=1)[:, s - 1]
            new = remaining & (observed > k[:, None])
            if not new.any():
                break
            remaining &= ~new
        return (~remaining) @ weights
