"""Step-down procedures built on Bonferroni-type single steps.

Holm (plain and weighted), Shaffer's S2, Hommel's P3, step-down Sidak,
serial and parallel gatekeeping, closed testing and partitioning. Each is a
:class:`~seqreject.core.Schedule`; closed testing and partitioning also
extend the hypothesis family (see :class:`ExtendedFamily`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from ._bits import bits, full, popcount, to_mask
from .core import Schedule
from .logic import HypothesisUniverse, LogicalStructure


class Holm(Schedule):
    """``alpha_H(R) = level * w_H / sum of w over unrejected hypotheses``."""

    name = "holm"

    def __init__(self, n: int, weights: Sequence[float] | None = None):
        super().__init__(n)
        if weights is None:
            self.weights = None
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (n,):
                raise ValueError(f"need {n} weights, got {w.shape}")
            if not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
                raise ValueError("weights must be finite, nonnegative and not all zero")
            self.weights = w
            self.name = "weighted-holm"

    def _share(self, h, rejected):
        """Weight of ``h`` and total weight still unrejected (``h`` included)."""
        if self.weights is None:
            return 1.0, float(self.n - popcount(rejected & ~(1 << h)))
        remaining = full(self.n) & ~rejected | (1 << h)
        return self.weights[h], float(sum(self.weights[j] for j in bits(remaining)))

    def alpha(self, h, rejected, level, evidence=None):
        w, total = self._share(h, rejected)
        if w == 0:
            return 0.0
        return level * w / total

    def alphas(self, rejected, level, evidence=None):
        if self.weights is None:
            inside = (rejected >> np.arange(self.n)) & 1
            return level / (self.n - popcount(rejected) + inside)
        return super().alphas(rejected, level, evidence)

    def inverse(self, h, rejected, p, evidence=None):
        w, total = self._share(h, rejected)
        if w == 0:
            return 1.0
        return min(1.0, p * total / w)

    # Rejection is decided as ``p * total / w <= level``, the same expression
    # the inverse returns, rather than ``p <= level * w / total``. The two agree
    # in exact arithmetic; in floating point only the first makes adjusted
    # p-values reproduce the classical running-maximum formula bit for bit.

    def _totals(self, R):
        """Unrejected weight per row of ``R`` (int64 masks), ``h`` itself included."""
        shifts = np.arange(self.n, dtype=np.int64)
        inside = (R[:, None] >> shifts) & 1
        if self.weights is None:
            m = self.n - inside.sum(axis=1)
            return (m[:, None] + inside).astype(float), np.ones(self.n)
        out = (1 - inside) @ self.weights
        return out[:, None] + inside * self.weights, self.weights

    def _hits(self, P, R, level):
        total, w = self._totals(R)
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = P * total / w
        return (w > 0) & (scaled <= level)

    def step(self, rejected, evidence, level):
        p = np.asarray(evidence, dtype=float)
        hit = self._hits(p[None, :], np.array([rejected], dtype=np.int64), level)[0]
        thr = self.alphas(rejected, level)
        new = 0
        crit = {}
        for h in range(self.n):
            if rejected >> h & 1:
                continue
            crit[h] = float(thr[h])
            if hit[h]:
                new |= 1 << h
        return new, crit

    def run_batch(self, evidence_batch, level):
        P = np.asarray(evidence_batch, dtype=float)
        if P.ndim != 2 or P.shape[1] != self.n:
            raise ValueError(f"expected a (reps, {self.n}) evidence array, got {P.shape}")
        shifts = np.arange(self.n, dtype=np.int64)
        weights = np.int64(1) << shifts
        R = np.zeros(len(P), dtype=np.int64)
        for _ in range(self.n):
            free_bits = ((R[:, None] >> shifts) & 1) == 0
            new = (self._hits(P, R, level) & free_bits) @ weights
            if not new.any():
                break
            R |= new
        return R


def holm(n: int, weights: Sequence[float] | None = None) -> Holm:
    return Holm(n, weights)


class ShafferS2(Schedule):
    """``alpha_H(R) = level / D(R)``, ``D`` the largest true set avoiding ``R``."""

    name = "shaffer-s2"

    def __init__(self, structure: LogicalStructure):
        super().__init__(structure.n)
        self.structure = structure

    def alpha(self, h, rejected, level, evidence=None):
        d = self.structure.max_true_count(rejected)
        return 1.0 if d == 0 else level / d

    def alphas(self, rejected, level, evidence=None):
        return np.full(self.n, self.alpha(0, rejected, level))

    def inverse(self, h, rejected, p, evidence=None):
        d = self.structure.max_true_count(rejected)
        return 0.0 if d == 0 else min(1.0, p * d)


class HommelP3(Schedule):
    """``alpha_H(R) = level / (largest true set containing H and avoiding R)``."""

    name = "hommel-p3"

    def __init__(self, structure: LogicalStructure):
        super().__init__(structure.n)
        self.structure = structure

    def alpha(self, h, rejected, level, evidence=None):
        d = self.structure.max_true_count_with(h, rejected & ~(1 << h))
        return 1.0 if d == 0 else level / d

    def inverse(self, h, rejected, p, evidence=None):
        d = self.structure.max_true_count_with(h, rejected & ~(1 << h))
        return 0.0 if d == 0 else min(1.0, p * d)


def shaffer_s2(structure: LogicalStructure) -> ShafferS2:
    return ShafferS2(structure)


def hommel_p3(structure: LogicalStructure) -> HommelP3:
    return HommelP3(structure)


class SidakStepDown(Schedule):
    """``alpha_H(R) = 1 - (1 - level)^(1/m)`` with ``m`` unrejected hypotheses.

    Valid only when the Sidak product inequality holds for the true nulls
    (independence or positive orthant dependence); that is the caller's
    assertion and is recorded in :attr:`assumption`.
    """

    name = "sidak"
    justification = "sidak"
    assumption = "sidak inequality (independent or positively orthant dependent nulls)"

    def _m(self, h, rejected):
        return self.n - popcount(rejected & ~(1 << h))

    def alpha(self, h, rejected, level, evidence=None):
        # expm1/log1p keep full relative precision for small levels
        return -math.expm1(math.log1p(-level) / self._m(h, rejected)) if level < 1 else 1.0

    def inverse(self, h, rejected, p, evidence=None):
        return min(1.0, -math.expm1(self._m(h, rejected) * math.log1p(-p))) if p < 1 else 1.0


def sidak_stepdown(n: int) -> SidakStepDown:
    return SidakStepDown(n)


def _family_masks(families: Sequence[Sequence[int]], n: int) -> list[int]:
    masks = [to_mask(f) for f in families]
    if not masks or any(m == 0 for m in masks):
        raise ValueError("families must be nonempty")
    seen = 0
    for m in masks:
        if m & seen:
            raise ValueError("families overlap")
        seen |= m
    if seen != full(n):
        raise ValueError("families do not cover every hypothesis")
    return masks


class SerialGatekeeping(Schedule):
    """Holm inside each family; family ``j+1`` opens once families ``1..j`` are rejected."""

    name = "gatekeeping-serial"

    def __init__(self, n: int, families: Sequence[Sequence[int]]):
        super().__init__(n)
        self.families = _family_masks(families, n)

    def _where(self, h):
        for j, fam in enumerate(self.families):
            if fam >> h & 1:
                return j
        raise IndexError(h)

    def _denominator(self, h, rejected):
        j = self._where(h)
        before = 0
        for fam in self.families[:j]:
            before |= fam
        if before & ~rejected:
            return None
        return popcount(self.families[j] & ~rejected | (1 << h))

    def alpha(self, h, rejected, level, evidence=None):
        d = self._denominator(h, rejected)
        return 0.0 if d is None else level / d

    def inverse(self, h, rejected, p, evidence=None):
        d = self._denominator(h, rejected)
        return 1.0 if d is None else min(1.0, p * d)


class ParallelGatekeeping(Schedule):
    """Bonferroni in the first family, Holm in the second at a reduced level.

    The second family gets ``level * |R & G1| / (|G2 \\ R| * |G1|)``. With
    ``guilbaud=True`` the first family switches to Holm once the second
    family is entirely rejected.
    """

    name = "gatekeeping-parallel"

    def __init__(self, n: int, families: Sequence[Sequence[int]], guilbaud: bool = False):
        super().__init__(n)
        masks = _family_masks(families, n)
        if len(masks) != 2:
            raise ValueError(f"parallel gatekeeping needs exactly 2 families, got {len(masks)}")
        self.first, self.second = masks
        self.guilbaud = guilbaud
        if guilbaud:
            self.name = "gatekeeping-guilbaud"

    def _factor(self, h, rejected):
        g1, g2 = self.first, self.second
        n1 = popcount(g1)
        if g1 >> h & 1:
            if self.guilbaud and not g2 & ~rejected:
                return 1.0 / popcount(g1 & ~rejected | (1 << h))
            return 1.0 / n1
        remaining2 = popcount(g2 & ~rejected | (1 << h))
        return popcount(rejected & g1) / (remaining2 * n1)

    def alpha(self, h, rejected, level, evidence=None):
        return level * self._factor(h, rejected)

    def inverse(self, h, rejected, p, evidence=None):
        f = self._factor(h, rejected)
        return 1.0 if f == 0 else min(1.0, p / f)


def gatekeeping_serial(n: int, families) -> SerialGatekeeping:
    return SerialGatekeeping(n, families)


def gatekeeping_parallel(n: int, families, guilbaud: bool = False) -> ParallelGatekeeping:
    return ParallelGatekeeping(n, families, guilbaud)


# Local tests for intersection hypotheses. Each takes the ids of the
# elementary hypotheses being intersected and the elementary p-values, as a
# vector or as a (reps, n) array, and returns one p-value per row.


def _columns(ids, p):
    return np.asarray(p, dtype=float)[..., sorted(ids)]


def bonferroni_combine(ids: frozenset[int], p: np.ndarray):
    return np.minimum(1.0, len(ids) * _columns(ids, p).min(axis=-1))


def fisher_combine(ids: frozenset[int], p: np.ndarray):
    sub = _columns(ids, p)
    if sub.shape[-1] == 1:
        return sub[..., 0]
    with np.errstate(divide="ignore"):
        statistic = -2.0 * np.log(sub).sum(axis=-1)
    return stats.chi2.sf(statistic, 2 * sub.shape[-1])


def simes_combine(ids: frozenset[int], p: np.ndarray):
    sub = np.sort(_columns(ids, p), axis=-1)
    k = sub.shape[-1]
    return np.minimum(1.0, (k * sub / np.arange(1, k + 1)).min(axis=-1))


class UserTable:
    """Local p-values looked up by the set of intersected elementary hypotheses.

    Sets missing from the table fall back to ``fallback`` when given, and
    raise ``KeyError`` otherwise.
    """

    def __init__(self, table: Mapping[frozenset[int], float], fallback=None):
        self.table = {frozenset(k): float(v) for k, v in table.items()}
        for k, v in self.table.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"local p-value for {sorted(k)} outside [0, 1]: {v}")
        self.fallback = fallback

    def __call__(self, ids, p):
        ids = frozenset(ids)
        if ids in self.table:
            return self.table[ids]
        if self.fallback is None:
            raise KeyError(f"no local p-value for intersection {sorted(ids)}")
        return self.fallback(ids, p)


LOCAL_TESTS: dict[str, Callable] = {
    "bonferroni": bonferroni_combine,
    "fisher": fisher_combine,
    "simes": simes_combine,
}


def hypothesis_atom_sets(structure: LogicalStructure, cap: int = 1 << 16) -> list[int]:
    """For each hypothesis, the bitmask of atoms under which it is true."""
    atoms = structure.true_sets()
    if len(atoms) > cap:
        raise ValueError(f"structure has {len(atoms)} atoms, above the cap of {cap}")
    out = [0] * structure.n
    for k, t in enumerate(atoms):
        for h in bits(t):
            out[h] |= 1 << k
    return out


@dataclass
class ExtendedFamily:
    """A hypothesis family enlarged by intersections or partition pieces.

    Attributes
    ----------
    universe, structure :
        The extended family and its induced logical structure (same atoms
        as the elementary structure).
    schedule : Schedule
    elementary : tuple of int
        Extended id of each elementary hypothesis.
    node_atoms : tuple of int
        Atom-set bitmask of each extended node.
    node_sources : tuple of frozenset
        For each node, the elementary hypotheses whose p-values feed its
        local test.
    """

    universe: HypothesisUniverse
    structure: LogicalStructure
    schedule: Schedule
    elementary: tuple[int, ...]
    node_atoms: tuple[int, ...]
    node_sources: tuple[frozenset, ...]
    local: Callable
    elementary_structure: LogicalStructure
    overrides: Mapping[int, float] | None = None

    @property
    def n(self) -> int:
        return len(self.elementary)

    def evidence(self, p) -> np.ndarray:
        """Extended p-values from elementary ones (a vector or a ``(reps, n)`` array)."""
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (self.n,) or p.ndim > 2:
            raise ValueError(f"expected {self.n} elementary p-values, got shape {p.shape}")
        out = np.empty(p.shape[:-1] + (len(self.node_atoms),))
        own = {e: j for j, e in enumerate(self.elementary)}
        for node, src in enumerate(self.node_sources):
            if self.overrides and node in self.overrides:
                out[..., node] = self.overrides[node]
            elif node in own:
                out[..., node] = p[..., own[node]]
            else:
                out[..., node] = self.local(src, p)
        return out

    def project(self, mask: int) -> int:
        """Restrict an extended rejected set to the elementary hypotheses."""
        return to_mask(j for j, e in enumerate(self.elementary) if mask >> e & 1)

    def true_mask(self, elementary_true: int) -> int:
        """Extended true set for the atom whose elementary true set is given."""
        atoms = self.elementary_structure.true_sets()
        try:
            k = list(atoms).index(elementary_true)
        except ValueError:
            raise ValueError(
                f"true set {elementary_true:b} is not a permitted truth assignment"
            ) from None
        return to_mask(i for i, a in enumerate(self.node_atoms) if a >> k & 1)

    def run(self, p, level):
        from .core import run

        return run(self.schedule, self.evidence(p), level)

    def run_batch(self, p_batch, level):
        return self.schedule.run_batch(self.evidence(p_batch), level)


def _source_label(universe: HypothesisUniverse, ids) -> str:
    return "{" + ",".join(universe.labels[i] for i in sorted(ids)) + "}"


def _extend(structure, node_atoms, node_sources, labels):
    """Extended universe and structure sharing the elementary atoms."""
    universe = HypothesisUniverse(tuple(labels))
    atoms = []
    for k in range(len(structure.true_sets())):
        atoms.append(to_mask(i for i, a in enumerate(node_atoms) if a >> k & 1))
    return universe, LogicalStructure(universe, atoms)


class ClosedTestingSchedule(Schedule):
    """``alpha_H(R) = level`` once every strictly implying hypothesis is rejected."""

    name = "closed-testing"

    def __init__(self, implying: Sequence[int]):
        super().__init__(len(implying))
        self.implying = tuple(implying)

    def alpha(self, h, rejected, level, evidence=None):
        return level if not self.implying[h] & ~rejected else 0.0

    def alphas(self, rejected, level, evidence=None):
        return np.array([level if not imp & ~rejected else 0.0 for imp in self.implying])

    def inverse(self, h, rejected, p, evidence=None):
        return p if not self.implying[h] & ~rejected else 1.0


def closed_testing(
    elementary: LogicalStructure, local: Callable = bonferroni_combine, max_nodes: int = 1 << 16
) -> ExtendedFamily:
    """Closed testing as a sequentially rejective procedure on the closure.

    The family is extended with every nonempty intersection of elementary
    hypotheses (deduplicated by atom set). Elementary hypotheses keep their
    own p-values; proper intersections get ``local(ids, p)``, ``ids`` being
    every elementary hypothesis the intersection implies.
    """
    base = hypothesis_atom_sets(elementary)
    if any(a == 0 for a in base):
        raise ValueError("every elementary hypothesis must be true under some atom")
    if len(set(base)) != len(base):
        raise ValueError("two elementary hypotheses are logically identical")
    nodes = list(base)
    seen = set(nodes)
    frontier = list(nodes)
    while frontier:
        fresh = []
        for a in frontier:
            for b in base:
                c = a & b
                if c and c not in seen:
                    seen.add(c)
                    fresh.append(c)
                    if len(seen) > max_nodes:
                        raise ValueError(f"closure exceeds {max_nodes} nodes")
        nodes.extend(fresh)
        frontier = fresh
    sources = [frozenset(j for j, b in enumerate(base) if a & ~b == 0) for a in nodes]
    n = elementary.n
    order = list(range(n)) + sorted(
        range(n, len(nodes)), key=lambda i: (len(sources[i]), sorted(sources[i]))
    )
    nodes = [nodes[i] for i in order]
    sources = [sources[i] for i in order]
    labels = list(elementary.labels) + [
        _source_label(elementary.universe, s) for s in sources[n:]
    ]
    implying = [
        to_mask(j for j, b in enumerate(nodes) if j != i and b & ~a == 0 and b != a)
        for i, a in enumerate(nodes)
    ]
    universe, structure = _extend(elementary, nodes, sources, labels)
    return ExtendedFamily(
        universe=universe,
        structure=structure,
        schedule=ClosedTestingSchedule(implying),
        elementary=tuple(range(n)),
        node_atoms=tuple(nodes),
        node_sources=tuple(sources),
        local=local,
        elementary_structure=elementary,
    )


class PartitioningSchedule(Schedule):
    """Pieces at ``level``; other hypotheses at 1 once covered by rejected pieces, else 0."""

    name = "partitioning"

    def __init__(self, node_atoms: Sequence[int], pieces: int):
        super().__init__(len(node_atoms))
        self.node_atoms = tuple(node_atoms)
        self.pieces = pieces

    def _covered(self, h, rejected):
        union = 0
        for j in bits(rejected):
            union |= self.node_atoms[j]
        return not self.node_atoms[h] & ~union

    def alpha(self, h, rejected, level, evidence=None):
        if self.pieces >> h & 1:
            return level
        return 1.0 if self._covered(h, rejected) else 0.0

    def inverse(self, h, rejected, p, evidence=None):
        if self.pieces >> h & 1:
            return p
        return 0.0 if self._covered(h, rejected) else 1.0


def partitioning(
    elementary: LogicalStructure,
    local: Callable = bonferroni_combine,
    overrides: Mapping[int, float] | None = None,
) -> ExtendedFamily:
    """Partitioning as a two-step sequentially rejective procedure.

    One piece per atom with a nonempty true set: the region where exactly
    that atom holds. A piece that coincides with an elementary hypothesis
    reuses it. Piece p-values come from ``overrides`` (keyed by atom index),
    else from ``local`` applied to the atom's true hypotheses.
    """
    if elementary.is_free:
        elementary = elementary.explicit()
    base = hypothesis_atom_sets(elementary)
    if len(set(base)) != len(base):
        raise ValueError("two elementary hypotheses are logically identical")
    nodes = list(base)
    sources = [frozenset([j]) for j in range(elementary.n)]
    labels = list(elementary.labels)
    pieces = 0
    piece_override = {}
    for k, t in enumerate(elementary.atoms):
        if t == 0:
            continue
        region = 1 << k
        if region in nodes:
            node = nodes.index(region)
        else:
            node = len(nodes)
            nodes.append(region)
            sources.append(frozenset(bits(t)))
            labels.append("part" + _source_label(elementary.universe, bits(t)))
        pieces |= 1 << node
        if overrides and k in overrides:
            piece_override[node] = float(overrides[k])
    universe, structure = _extend(elementary, nodes, sources, labels)
    return ExtendedFamily(
        universe=universe,
        structure=structure,
        schedule=PartitioningSchedule(nodes, pieces),
        elementary=tuple(range(elementary.n)),
        node_atoms=tuple(nodes),
        node_sources=tuple(sources),
        local=local,
        elementary_structure=elementary,
        overrides=piece_override or None,
    )
