import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqreject import (
    HypothesisUniverse,
    LogicalStructure,
    false_sets,
    holm,
    hommel_p3,
    improve_admissibility,
    max_true_count,
)
from seqreject.core import Schedule


class Constant(Schedule):
    def __init__(self, n, value):
        super().__init__(n)
        self.value = value

    def alpha(self, h, rejected, level, evidence=None):
        return self.value


def test_universe_rejects_bad_labels():
    with pytest.raises(ValueError, match="no hypotheses"):
        HypothesisUniverse(())
    with pytest.raises(ValueError, match="duplicate"):
        HypothesisUniverse(("A", "B", "A"))


def test_universe_masks_round_trip():
    u = HypothesisUniverse(("A", "B", "C"))
    assert u.mask(["A", "C"]) == 0b101
    assert u.labels_of(0b110) == ["B", "C"]
    with pytest.raises(KeyError):
        u.mask(["D"])


def test_false_sets_free_is_power_set():
    assert set(false_sets(LogicalStructure.free(2))) == {0, 1, 2, 3}


def test_false_sets_pairwise(pairwise3):
    u = pairwise3.universe
    expected = {
        0,
        u.mask(["H23", "H13"]),
        u.mask(["H12", "H13"]),
        u.mask(["H12", "H23"]),
        u.mask(["H12", "H13", "H23"]),
    }
    assert set(false_sets(pairwise3)) == expected


def test_false_sets_delta(delta):
    u = delta.universe
    assert set(false_sets(delta)) == {0, u.mask(["H2", "H12"]), u.mask(["H1", "H12"])}


def test_pairwise_atoms_sizes(pairwise3):
    assert sorted(bin(a).count("1") for a in pairwise3.atoms) == [0, 1, 1, 1, 3]


def test_max_true_count_examples(pairwise3):
    assert max_true_count(pairwise3, 0) == 3
    assert max_true_count(pairwise3, pairwise3.universe.mask(["H12"])) == 1
    assert max_true_count(LogicalStructure.free(5), {0, 1}) == 3


def test_duplicate_atoms_rejected():
    u = HypothesisUniverse.of_size(2)
    with pytest.raises(ValueError, match="duplicate"):
        LogicalStructure(u, [[0, 1], [1, 0]])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 15), min_size=1, max_size=10, unique=True))
def test_max_true_count_non_increasing(atoms):
    s = LogicalStructure(HypothesisUniverse.of_size(4), atoms)
    for R in range(16):
        for j in range(4):
            assert s.max_true_count(R | (1 << j)) <= s.max_true_count(R)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_free_matches_explicit(n):
    free = LogicalStructure.free(n)
    explicit = free.explicit()
    for R in range(1 << n):
        assert free.max_true_count(R) == explicit.max_true_count(R)
        for h in range(n):
            assert free.max_true_count_with(h, R) == explicit.max_true_count_with(h, R)
    assert set(free.false_sets()) == set(explicit.false_sets())


def test_admissibility_raises_holm_to_p3(pairwise3):
    u = pairwise3.universe
    improved = improve_admissibility(holm(3), pairwise3)
    R, h = u.mask(["H12"]), u.index("H23")
    assert holm(3).alpha(h, R, 0.05) == pytest.approx(0.025)
    assert improved.alpha(h, R, 0.05) == pytest.approx(0.05)
    assert improved.alpha(h, R, 0.05) == pytest.approx(hommel_p3(pairwise3).alpha(h, R, 0.05))


def test_admissibility_unchanged_on_phi(pairwise3):
    improved = improve_admissibility(holm(3), pairwise3)
    for R in pairwise3.false_sets():
        np.testing.assert_array_equal(improved.alphas(R, 0.05), holm(3).alphas(R, 0.05))


def test_admissibility_of_zero_schedule_is_zero(pairwise3):
    improved = improve_admissibility(Constant(3, 0.0), pairwise3)
    R = pairwise3.universe.mask(["H12"])
    assert R not in pairwise3.false_sets()
    assert improved.alpha(pairwise3.universe.index("H23"), R, 0.05) == 0.0


def test_admissibility_rejects_free():
    with pytest.raises(ValueError):
        improve_admissibility(holm(3), LogicalStructure.free(3))


def _all_structures(n, count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        k = int(rng.integers(1, 1 << n))
        atoms = rng.choice(1 << n, size=k, replace=False).tolist()
        yield LogicalStructure(HypothesisUniverse.of_size(n), atoms)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_admissibility_dominates_and_is_idempotent(n):
    base = holm(n)
    for s in _all_structures(n, 25, seed=n):
        once = improve_admissibility(base, s)
        twice = improve_admissibility(once, s)
        for R in range(1 << n):
            a0, a1, a2 = base.alphas(R, 0.05), once.alphas(R, 0.05), twice.alphas(R, 0.05)
            for h in range(n):
                if R >> h & 1:
                    continue
                assert a1[h] >= a0[h] - 1e-15
                assert a2[h] == pytest.approx(a1[h])


def test_admissibility_keeps_monotonicity():
    from seqreject import check_monotonicity

    for s in _all_structures(4, 40, seed=7):
        assert check_monotonicity(improve_admissibility(holm(4), s)).ok


def test_p3_dominates_s2_exhaustively():
    from seqreject import shaffer_s2

    for s in _all_structures(4, 40, seed=11):
        p3, s2 = hommel_p3(s), shaffer_s2(s)
        for R, h in itertools.product(range(16), range(4)):
            if not R >> h & 1:
                assert p3.alpha(h, R, 0.05) >= s2.alpha(h, R, 0.05) - 1e-15
