"""Hypothesis families and the logical relations between them.

Logical relations are encoded by *atoms*: each atom is one truth assignment
that the model allows, stored as the bitmask of hypotheses that are true
under it. The family of admissible false sets is then
``{full ^ atom for atom in atoms}``. A structure without atoms ("free")
allows every truth assignment and answers all queries in closed form.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._bits import bits, full, popcount, to_mask
from .core import Schedule


@dataclass(frozen=True)
class HypothesisUniverse:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise ValueError("no hypotheses")
        if len(set(labels)) != len(labels):
            dupes = sorted({x for x in labels if labels.count(x) > 1})
            raise ValueError(f"duplicate hypothesis labels: {dupes}")

    @classmethod
    def of_size(cls, n: int, prefix: str = "H") -> "HypothesisUniverse":
        return cls(tuple(f"{prefix}{i + 1}" for i in range(n)))

    @property
    def count(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown hypothesis label {label!r}") from None

    def mask(self, members: Iterable[str | int]) -> int:
        m = 0
        for x in members:
            i = x if isinstance(x, (int, np.integer)) else self.index(x)
            if not 0 <= i < self.count:
                raise KeyError(f"hypothesis id {i} outside universe of size {self.count}")
            m |= 1 << int(i)
        return m

    def labels_of(self, mask: int) -> list[str]:
        return [self.labels[i] for i in bits(mask)]


class LogicalStructure:
    """A hypothesis universe plus the truth assignments the model permits.

    Parameters
    ----------
    universe : HypothesisUniverse
    atoms : iterable of masks or id collections, optional
        True sets of the permitted truth assignments. ``None`` means every
        assignment is possible.
    """

    def __init__(self, universe: HypothesisUniverse, atoms: Iterable | None = None):
        self.universe = universe
        if atoms is None:
            self.atoms = None
            return
        masks = [to_mask(a) for a in atoms]
        if not masks:
            raise ValueError("an explicit structure needs at least one atom")
        if len(set(masks)) != len(masks):
            raise ValueError("duplicate atoms")
        for m in masks:
            if m >> universe.count:
                raise ValueError(f"atom {m:b} refers to hypotheses outside the universe")
        self.atoms = tuple(masks)
        self._false_sets = frozenset(full(universe.count) ^ m for m in masks)

    @classmethod
    def free(cls, universe: HypothesisUniverse | int) -> "LogicalStructure":
        if isinstance(universe, int):
            universe = HypothesisUniverse.of_size(universe)
        return cls(universe, None)

    @property
    def is_free(self) -> bool:
        return self.atoms is None

    @property
    def n(self) -> int:
        return self.universe.count

    @property
    def labels(self) -> tuple[str, ...]:
        return self.universe.labels

    def true_sets(self) -> Sequence[int]:
        return range(1 << self.n) if self.is_free else self.atoms

    def false_sets(self):
        """Admissible false sets; a lazy ``range`` in free mode."""
        if self.is_free:
            return range(1 << self.n)
        return self._false_sets

    def is_false_set(self, rejected: int) -> bool:
        return self.is_free or rejected in self._false_sets

    def max_true_count(self, rejected: int) -> int:
        if self.is_free:
            return self.n - popcount(rejected)
        return max((popcount(t) for t in self.atoms if not t & rejected), default=0)

    def max_true_count_with(self, h: int, rejected: int) -> int:
        """Largest true set that contains ``h`` and avoids ``rejected``."""
        if self.is_free:
            return 0 if rejected >> h & 1 else self.n - popcount(rejected)
        return max(
            (popcount(t) for t in self.atoms if t >> h & 1 and not t & rejected), default=0
        )

    def explicit(self) -> "LogicalStructure":
        """The same structure with every truth assignment listed as an atom."""
        if not self.is_free:
            return self
        if self.n > 20:
            raise ValueError("refusing to enumerate more than 2**20 atoms")
        return LogicalStructure(self.universe, range(1 << self.n))

    def to_dict(self) -> dict:
        out = {"labels": list(self.labels)}
        if self.is_free:
            out["free"] = True
        else:
            out["atoms"] = [self.universe.labels_of(a) for a in self.atoms]
        return out

    def __repr__(self):
        kind = "free" if self.is_free else f"{len(self.atoms)} atoms"
        return f"LogicalStructure({list(self.labels)}, {kind})"


def false_sets(structure: LogicalStructure):
    return structure.false_sets()


def max_true_count(structure: LogicalStructure, rejected: int) -> int:
    return structure.max_true_count(to_mask(rejected))


def pairwise_equality(k: int) -> LogicalStructure:
    """All pairwise equality hypotheses ``mu_i = mu_j`` among ``k`` means.

    Atoms are the equality patterns of the means, i.e. set partitions of
    ``{1..k}``; ``H_ij`` is true when ``i`` and ``j`` share a block.
    """
    pairs = list(itertools.combinations(range(k), 2))
    universe = HypothesisUniverse(tuple(f"H{i + 1}{j + 1}" for i, j in pairs))
    atoms = set()
    for blocks in _set_partitions(list(range(k))):
        where = {x: b for b, block in enumerate(blocks) for x in block}
        atoms.add(to_mask(p for p, (i, j) in enumerate(pairs) if where[i] == where[j]))
    return LogicalStructure(universe, sorted(atoms))


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


class AdmissibleSchedule(Schedule):
    """Uniform improvement of a schedule on rejected sets that cannot be false sets.

    For ``R`` outside the admissible false sets, the critical value of ``H`` is
    the least favourable value among admissible supersets ``S`` of ``R`` that
    leave ``H`` unrejected; with no such ``S``, ``H`` must be false and gets
    critical value 1.
    """

    def __init__(self, base: Schedule, structure: LogicalStructure):
        if structure.is_free:
            raise ValueError("admissibility improvement is the identity on free structures")
        if structure.n != base.n:
            raise ValueError("structure and schedule disagree on the number of hypotheses")
        super().__init__(base.n)
        self.base = base
        self.structure = structure
        self.strict = base.strict
        self.justification = base.justification
        self.data_dependent = base.data_dependent
        self.name = f"admissible({base.name})"
        self._phi = sorted(structure.false_sets())
        self._supersets: dict[tuple[int, int], list[int]] = {}

    def _candidates(self, h, rejected):
        key = (h, rejected)
        if key not in self._supersets:
            self._supersets[key] = [
                S for S in self._phi if S != rejected and S & rejected == rejected and not S >> h & 1
            ]
        return self._supersets[key]

    def alpha(self, h, rejected, level, evidence=None):
        if self.structure.is_false_set(rejected):
            return self.base.alpha(h, rejected, level, evidence)
        cands = self._candidates(h, rejected)
        if not cands:
            return -np.inf if self.strict else 1.0
        vals = [self.base.alpha(h, S, level, evidence) for S in cands]
        return max(vals) if self.strict else min(vals)

    def inverse(self, h, rejected, p, evidence=None):
        if self.structure.is_false_set(rejected):
            return self.base.inverse(h, rejected, p, evidence)
        cands = self._candidates(h, rejected)
        if not cands:
            return 0.0
        return max(self.base.inverse(h, S, p, evidence) for S in cands)


def improve_admissibility(schedule: Schedule, structure: LogicalStructure) -> Schedule:
    return AdmissibleSchedule(schedule, structure)
