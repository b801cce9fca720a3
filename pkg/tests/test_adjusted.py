import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catalog import build_catalog
from oracles import holm_adjusted
from seqreject import (
    HypothesisTree,
    adjusted_pvalues,
    bisection_inverse,
    holm,
    run,
    tree_basic,
)
from seqreject.core import Schedule

GRID = np.array([0.001, 0.005, 0.01, 0.02, 0.03, 0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 0.5])
CATALOG = build_catalog()


@pytest.mark.parametrize("entry", CATALOG, ids=[e.name for e in CATALOG])
def test_grid_consistency(entry):
    rng = np.random.default_rng(sum(map(ord, entry.name)))
    for _ in range(40):
        ev = entry.evidence(rng)
        rep = adjusted_pvalues(entry.successor, ev)
        for level in GRID:
            assert rep.rejected_at(level) == run(entry.successor, ev, level).final


def test_breakpoints_nested():
    rep = adjusted_pvalues(holm(4), [0.01, 0.04, 0.03, 0.5])
    assert list(rep.breakpoints) == sorted(rep.breakpoints)
    for a, b in zip(rep.finals, rep.finals[1:]):
        assert a & ~b == 0


def test_holm_worked_example():
    rep = adjusted_pvalues(holm(3), [0.01, 0.04, 0.3])
    np.testing.assert_allclose(rep.adjusted, [0.03, 0.08, 0.3])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_holm_matches_classical_formula(p):
    np.testing.assert_array_equal(adjusted_pvalues(holm(len(p)), p).adjusted, holm_adjusted(p))


def test_weighted_holm_breakpoint():
    rep = adjusted_pvalues(holm(2, [3, 1]), [0.03, 0.02])
    # H1 needs level 0.04, then H2 needs 0.02 on its own
    np.testing.assert_allclose(rep.adjusted, [0.04, 0.04])


def test_unreachable_hypothesis_gets_one():
    rep = adjusted_pvalues(holm(2, [1, 0]), [0.01, 0.0])
    assert rep.adjusted[1] == 1.0
    assert rep.adjusted[0] == pytest.approx(0.01)


def test_zero_pvalue():
    rep = adjusted_pvalues(holm(3), [0.0, 0.2, 0.9])
    assert rep.adjusted[0] == 0.0


def test_tree_basic_root_first():
    tree = HypothesisTree.perfect_binary(2)
    rep = adjusted_pvalues(tree_basic(tree), [0.04, 0.001, 0.01])
    # children cannot be rejected before the root, and each gets half the level
    np.testing.assert_allclose(rep.adjusted, [0.04, 0.04, 0.04])
    rep = adjusted_pvalues(tree_basic(tree), [0.001, 0.01, 0.03])
    np.testing.assert_allclose(rep.adjusted, [0.001, 0.02, 0.06])


def test_warm_start_matches_cold_search():
    rng = np.random.default_rng(3)
    tree = HypothesisTree.perfect_binary(3)
    sched = tree_basic(tree)
    for _ in range(30):
        p = rng.random(7) ** 2
        rep = adjusted_pvalues(sched, p)
        for h in range(7):
            cold = bisection_inverse(lambda lv: 1.0 if run(sched, p, lv).final >> h & 1 else 0.0, 0.5)
            assert rep.adjusted[h] == pytest.approx(cold, abs=1e-9)


def test_rows():
    rep = adjusted_pvalues(holm(2), [0.01, 0.2], labels=["a", "b"])
    rows = rep.to_rows([0.01, 0.2], 0.05)
    assert rows[0] == {"label": "a", "raw_p": 0.01, "adjusted_p": 0.02, "rejected_at_alpha": True}
    assert rows[1]["rejected_at_alpha"] is False


class TestBisection:
    def test_linear(self):
        assert bisection_inverse(lambda lv: lv / 4, 0.01) == pytest.approx(0.04, abs=1e-9)

    def test_always_rejects(self):
        assert bisection_inverse(lambda lv: 1.0, 0.3) == 0.0

    def test_never_rejects(self):
        assert bisection_inverse(lambda lv: 0.0, 0.0) == 1.0
        assert bisection_inverse(lambda lv: lv / 10, 0.5) == 1.0

    def test_result_rejects(self):
        f = lambda lv: lv**2  # noqa: E731
        x = bisection_inverse(f, 0.1)
        assert 0.1 <= f(x)
        assert x == pytest.approx(0.1**0.5, abs=1e-9)

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            bisection_inverse(lambda lv: lv, 0.1, tol=0)


def test_inconsistent_inverse_detected():
    class Lying(Schedule):
        def alpha(self, h, rejected, level, evidence=None):
            return level / 10

        def inverse(self, h, rejected, p, evidence=None):
            return p  # claims rejection ten times too early

    with pytest.raises(ValueError, match="inverse inconsistent"):
        adjusted_pvalues(Lying(2), [0.01, 0.02])
