import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from expo.sampler import CumulativeScores, Exp3Sampler, accumulate, distribution, sample

finite = st.floats(-1e9, 1e9, allow_nan=False)


def softmax_oracle(s, eta):
    """Log-sum-exp reference, independent of the max-translation code path."""
    from scipy.special import softmax
    return softmax(eta * np.asarray(s, dtype=np.float64))


def test_zeros_and_accumulate():
    cs = CumulativeScores.zeros(3)
    cs = accumulate(cs, [1.0, 2.0, 3.0])
    cs = accumulate(cs, [1.0, 0.0, -1.0])
    np.testing.assert_array_equal(cs.s_hat, [2.0, 2.0, 2.0])
    assert cs.t == 2


def test_accumulate_rejects_bad_predictions():
    cs = CumulativeScores.zeros(3)
    with pytest.raises(ValueError):
        accumulate(cs, [1.0, 2.0])
    with pytest.raises(ValueError):
        accumulate(cs, [1.0, np.nan, 0.0])


def test_equal_scores_give_uniform():
    np.testing.assert_allclose(distribution([5.0] * 4, 100.0), [0.25] * 4)


def test_single_arm():
    assert distribution([123.0], 10.0).tolist() == [1.0]
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    assert sample([1.0], rng) == 0
    assert rng.bit_generator.state == state


def test_eta_must_be_positive():
    with pytest.raises(ValueError):
        distribution([0.0, 1.0], 0.0)


def test_huge_scores_do_not_overflow():
    p = distribution([1e9, 1e9 - 1, -1e9], 1000.0)
    assert np.isfinite(p).all()
    assert p[0] == 1.0


def test_closed_form_two_arms():
    # p0 = 1 / (1 + exp(-eta * gap))
    p = distribution([1.0, 0.0], 10.0)
    assert p[0] == pytest.approx(1.0 / (1.0 + np.exp(-10.0)), rel=1e-14)


@settings(max_examples=300)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=2, max_size=20), st.sampled_from([0.1, 1.0, 10.0]))
def test_matches_logsumexp_oracle(s, eta):
    np.testing.assert_allclose(distribution(s, eta), softmax_oracle(s, eta), rtol=1e-10, atol=1e-300)


@given(st.lists(finite, min_size=1, max_size=30), st.sampled_from([10.0, 100.0, 1000.0]))
def test_valid_distribution(s, eta):
    p = distribution(s, eta)
    assert np.isfinite(p).all()
    assert abs(p.sum() - 1.0) < 1e-9
    assert p[int(np.argmax(s))] == p.max()


@given(st.lists(st.integers(-2**49, 2**49), min_size=2, max_size=10), st.integers(-2**31, 2**31))
def test_exact_shift_invariance(grid, c):
    """Shifts that are exact in floating point leave the distribution bit-identical.

    Scores sit on a 2**-20 grid and |s + c| < 2**32, so every sum needs at most 52 bits.
    """
    s = np.asarray(grid, dtype=np.float64) * 2.0 ** -20
    np.testing.assert_array_equal(distribution(s, 100.0), distribution(s + float(c), 100.0))


def test_inexact_shift_error_is_rounding_bounded():
    # shifting by c perturbs each score by at most one ulp of |s + c|, so the
    # exponent moves by at most eta * 2 ulp and p_i by a relative factor of about that much
    rng = np.random.default_rng(1)
    for _ in range(200):
        s = rng.uniform(-1e3, 1e3, 8)
        c = rng.uniform(-1e3, 1e3)
        eta = 10.0
        p, q = distribution(s, eta), distribution(s + c, eta)
        ulp = np.spacing(np.max(np.abs(s)) + abs(c))
        bound = 4 * eta * ulp * 2
        np.testing.assert_allclose(q, p, rtol=bound, atol=1e-300)


def test_sample_is_reproducible():
    p = distribution([0.0, 0.1, 0.2], 10.0)
    a = [sample(p, np.random.default_rng(3)) for _ in range(5)]
    b = [sample(p, np.random.default_rng(3)) for _ in range(5)]
    assert a == b


def test_sample_frequencies_match_probs():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    rng = np.random.default_rng(7)
    counts = np.bincount([sample(p, rng) for _ in range(20000)], minlength=4)
    assert stats.chisquare(counts, p * counts.sum()).pvalue > 0.01


def test_sampler_helper():
    s = Exp3Sampler(3, eta=10.0, rng=np.random.default_rng(0))
    np.testing.assert_allclose(s.probs(), [1 / 3] * 3)
    p = s.update([1.0, 0.0, 0.0])
    assert p[0] > p[1] == p[2]
    assert 0 <= s.draw() < 3
