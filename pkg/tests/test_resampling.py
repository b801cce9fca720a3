import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqreject import (
    MaxTProcedure,
    MaxTSchedule,
    critical_value,
    permutation_evidence,
    quantile_index,
    run,
    sign_flip_group,
    stepdown_maxT,
    two_sample_permutation_group,
    user_group,
    verify_group,
)
from seqreject.resampling import TwoSampleStatistic, mean_statistic, t_statistic, two_sided


class TestQuantileIndex:
    def test_values(self):
        assert quantile_index(64, 0.05) == 61
        assert quantile_index(20, 0.05) == 19
        assert quantile_index(10, 0.3) == 7  # 0.3 * 10 rounds below 3
        assert quantile_index(4, 0.0) == 4

    def test_errors(self):
        with pytest.raises(ValueError):
            quantile_index(0, 0.05)
        with pytest.raises(ValueError):
            quantile_index(10, 1.5)


class TestGroups:
    def test_sign_flip_full(self):
        g = sign_flip_group(3)
        assert g.order == 8
        assert verify_group(g).status == "ok"
        assert np.all(g.signs[0] == 1)

    def test_sign_flip_sampled(self):
        g = sign_flip_group(10, sample=50, seed=2)
        assert g.order == 50
        assert np.all(g.signs[0] == 1)
        assert verify_group(g).status == "not-applicable"
        again = sign_flip_group(10, sample=50, seed=2)
        np.testing.assert_array_equal(g.signs, again.signs)

    def test_sign_flip_too_large(self):
        with pytest.raises(ValueError, match="sample="):
            sign_flip_group(20)

    def test_permutation_group(self):
        g = two_sample_permutation_group(2, 2)
        assert g.order == 24
        assert verify_group(g).ok
        with pytest.raises(ValueError, match="too many"):
            two_sample_permutation_group(6, 6)
        s = two_sample_permutation_group(6, 6, sample=100, seed=0)
        np.testing.assert_array_equal(s.perms[0], np.arange(12))

    def test_user_group_ok(self):
        g = user_group([[0, 1, 2], [1, 2, 0], [2, 0, 1]])
        assert verify_group(g).status == "ok"

    def test_user_group_not_closed(self):
        # identity, a transposition and a 3-cycle
        v = verify_group(user_group([[0, 1, 2], [1, 0, 2], [1, 2, 0]]))
        assert v.status == "violation"
        assert "not in group" in v.detail

    def test_user_group_missing_identity(self):
        v = verify_group(user_group([[1, 0]]))
        assert v.status == "violation"
        assert v.detail == "identity missing"

    def test_user_group_signed(self):
        g = user_group([([0, 1], [1, 1]), ([0, 1], [-1, -1])])
        assert verify_group(g).ok

    def test_user_group_functions(self):
        g = user_group([lambda X: X, lambda X: -X], n=3)
        assert verify_group(g).ok
        assert verify_group(user_group([lambda X: X, lambda X: 2 * X], n=3)).status == "violation"

    def test_user_group_errors(self):
        with pytest.raises(ValueError, match="permutation"):
            user_group([[0, 0, 1]])
        with pytest.raises(ValueError):
            user_group([])
        with pytest.raises(ValueError, match="different"):
            user_group([[0, 1], [0, 1, 2]])


class TestStatistics:
    def test_mean_and_t_broadcast(self):
        X = np.random.default_rng(0).standard_normal((5, 2))
        stack = np.stack([X, -X])
        np.testing.assert_allclose(mean_statistic(stack)[1], -X.mean(axis=0))
        from scipy import stats

        np.testing.assert_allclose(t_statistic(X), stats.ttest_1samp(X, 0).statistic)

    def test_constant_column_t_is_zero(self):
        assert t_statistic(np.ones((4, 1)))[0] == 0.0

    def test_two_sample(self):
        X = np.array([[1.0], [2.0], [5.0], [7.0]])
        assert TwoSampleStatistic([0, 0, 1, 1])(X)[0] == pytest.approx(4.5)
        with pytest.raises(ValueError):
            TwoSampleStatistic([0, 0, 0, 0])

    def test_two_sided(self):
        assert two_sided(mean_statistic)(np.array([[-1.0], [-3.0]]))[0] == 2.0


def test_sign_flip_example():
    # one hypothesis, two observations: the means over the four flips
    X = np.array([[1.0], [3.0]])
    ev = permutation_evidence(mean_statistic, X, sign_flip_group(2))
    assert sorted(ev.transformed[:, 0]) == [-2.0, -1.0, 1.0, 2.0]
    assert critical_value(ev.transformed, 0, 0.25) == 1.0
    assert run(MaxTSchedule(1), ev, 0.25).final == 1


def test_strict_comparison_at_critical_value():
    from seqreject import PermutationEvidence

    M = np.array([[0.0], [1.0], [2.0], [3.0]])
    ev = PermutationEvidence(np.array([2.0]), M)
    # s = 4 - floor(0.25 * 4) = 3, k = 2, and 2 > 2 fails
    assert critical_value(M, 0, 0.25) == 2.0
    assert run(MaxTSchedule(1), ev, 0.25).final == 0


def test_critical_value_non_increasing():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((64, 4))
    for R in range(15):
        for j in range(4):
            if not R >> j & 1 and R | 1 << j != 15:
                assert critical_value(M, R | 1 << j, 0.05) <= critical_value(M, R, 0.05)


def test_stepdown_trace_and_metadata():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((8, 3)) + np.array([2.0, 0.0, 1.5])
    t = stepdown_maxT(t_statistic, X, sign_flip_group(8), 0.05, debug=True)
    assert t.final & 1
    assert t.metadata["group"]["order"] == 256
    assert "assumption" in t.metadata


def test_inverse_closed_form():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((6, 3))
    ev = permutation_evidence(mean_statistic, X, sign_flip_group(6))
    s = MaxTSchedule(3)
    for h in range(3):
        level = s.inverse(h, 0, ev.observed[h], ev)
        assert level * 64 == int(round(level * 64))


def test_evidence_checked():
    with pytest.raises(TypeError):
        run(MaxTSchedule(2), [0.1, 0.2], 0.05)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.05, 0.1, 0.2]))
def test_batch_matches_engine(seed, level):
    rng = np.random.default_rng(seed)
    group = sign_flip_group(5)
    data = rng.standard_normal((7, 5, 3)) + rng.random(3)
    proc = MaxTProcedure(t_statistic, group)
    got = proc.run_batch(data, level)
    for b in range(len(data)):
        ev = permutation_evidence(t_statistic, data[b], group)
        assert got[b] == run(MaxTSchedule(3), ev, level).final


def test_batch_shape_checked():
    with pytest.raises(ValueError):
        MaxTProcedure(mean_statistic, sign_flip_group(4)).run_batch(np.zeros((2, 5, 1)), 0.05)
