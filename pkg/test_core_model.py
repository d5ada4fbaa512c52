#!/usr/bin/env python3
"""
Tests for supports, distributions, weights, hypotheses and losses.
"""

import numpy as np
import pytest

from core_model import (
    Dist,
    Hypothesis,
    InputValidationError,
    LossKind,
    LossSpec,
    SimplexWeights,
    Support,
    SupportMismatchError,
    expected_loss,
    expected_power_loss,
    mixture,
    pointwise_loss,
    uniform_dist,
)

S2 = Support.of_size(2)


def dist(*probs):
    return Dist(Support.of_size(len(probs)), probs)


def hyp(*values, bound=1.0):
    return Hypothesis(Support.of_size(len(values)), values, bound)


def test_dist_validation():
    with pytest.raises(InputValidationError):
        dist(0.5, 0.6)
    with pytest.raises(InputValidationError):
        dist(1.2, -0.2)
    with pytest.raises(InputValidationError):
        Dist(S2, [1.0])
    with pytest.raises(InputValidationError):
        Support(("a", "a"))


def test_dist_is_read_only():
    d = dist(0.5, 0.5)
    with pytest.raises(ValueError):
        d.probs[0] = 1.0


def test_simplex_weights_constructors():
    assert SimplexWeights.uniform(4).tolist() == [0.25] * 4
    assert SimplexWeights.vertex(3, 1).tolist() == [0.0, 1.0, 0.0]
    assert SimplexWeights.from_unnormalized([2.0, -1.0, 6.0]).tolist() == [0.25, 0.0, 0.75]
    with pytest.raises(InputValidationError):
        SimplexWeights([0.5, 0.4])
    with pytest.raises(InputValidationError):
        SimplexWeights.from_unnormalized([0.0, 0.0])


def test_hypothesis_range():
    assert hyp(0.0, 2.0, bound=2.0).range_bound == 2.0
    with pytest.raises(InputValidationError):
        hyp(0.0, 1.5)
    assert hyp(0.0, 1.0).is_boolean()
    assert not hyp(0.0, 0.5).is_boolean()


def test_loss_constructors():
    sq = LossSpec.squared(2.0)
    assert sq.bound_M == 4.0 and sq.beta == 2.0 and sq.convex_both
    ab = LossSpec.absolute(2.0)
    assert ab.bound_M == 2.0 and ab.beta == 1.0
    zo = LossSpec.zero_one()
    assert zo.kind is LossKind.ZERO_ONE and not zo.convex_first
    assert LossSpec.from_name("squared").bound_M == 1.0
    with pytest.raises(InputValidationError):
        LossSpec.absolute(1.0).check_range(2.0)


def test_zero_one_needs_boolean_values():
    with pytest.raises(InputValidationError):
        pointwise_loss(LossSpec.zero_one(), np.array([0.5, 1.0]), np.array([0.0, 1.0]))


def test_expected_loss_examples():
    p = dist(0.5, 0.5)
    h = hyp(0.3, 0.9)
    assert expected_loss(p, h, h, LossSpec.absolute()) == 0.0
    assert expected_loss(dist(1.0, 0.0), h, hyp(0.5, 0.0), LossSpec.absolute()) == pytest.approx(0.2, abs=1e-15)
    assert expected_loss(p, hyp(1.0, 0.0), hyp(0.0, 0.0), LossSpec.zero_one()) == 0.5


def test_expected_power_loss():
    q = dist(0.5, 0.5)
    h, f = hyp(0.2, 0.4), hyp(0.0, 0.0)
    loss = LossSpec.absolute()
    assert expected_power_loss(q, h, f, loss, 2.0) == pytest.approx(0.10, abs=1e-15)
    assert expected_power_loss(q, h, f, loss, 1.0) == expected_loss(q, h, f, loss)
    assert expected_power_loss(q, h, h, loss, 3.0) == 0.0
    with pytest.raises(InputValidationError):
        expected_power_loss(q, h, f, loss, 0.5)


def test_mixture_examples():
    q1, q2 = Dist(S2, [1.0, 0.0]), Dist(S2, [0.0, 1.0])
    np.testing.assert_allclose(mixture([q1, q2], SimplexWeights([0.3, 0.7])).probs, [0.3, 0.7])
    a, b = Dist(S2, [0.6, 0.4]), Dist(S2, [0.2, 0.8])
    np.testing.assert_allclose(mixture([a, b], SimplexWeights.uniform(2)).probs, [0.4, 0.6], atol=1e-15)
    np.testing.assert_array_equal(mixture([a, b], SimplexWeights.vertex(2, 0)).probs, a.probs)


def test_support_mismatch():
    with pytest.raises(SupportMismatchError):
        mixture([dist(0.5, 0.5), Dist(Support(("a", "b")), [0.5, 0.5])], SimplexWeights.uniform(2))


def test_uniform_dist():
    assert uniform_dist(Support.of_size(4)).probs.tolist() == [0.25] * 4
    assert uniform_dist(Support.of_size(1)).probs.tolist() == [1.0]
    np.testing.assert_allclose(uniform_dist(Support.of_size(3)).probs, 1.0 / 3.0, atol=1e-15)


def test_expected_loss_rejects_loss_bound_below_range():
    h, f = hyp(5.0, 5.0, bound=5.0), hyp(0.0, 0.0, bound=5.0)
    p = dist(0.5, 0.5)
    with pytest.raises(InputValidationError, match="needs M >= 5.0"):
        expected_loss(p, h, f, LossSpec.absolute())
    with pytest.raises(InputValidationError):
        expected_power_loss(p, h, f, LossSpec.squared(), 2.0)
    assert expected_loss(p, h, f, LossSpec.absolute(5.0)) == 5.0
    assert expected_loss(p, h, f, LossSpec.squared(5.0)) == 25.0


def test_expected_loss_is_linear_in_the_mixture():
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        n, k = int(rng.integers(1, 51)), int(rng.integers(1, 6))
        s = Support.of_size(n)
        sources = [Dist(s, rng.dirichlet(np.ones(n))) for _ in range(k)]
        lam = SimplexWeights.from_unnormalized(rng.dirichlet(np.ones(k)))
        h, f = Hypothesis(s, rng.random(n)), Hypothesis(s, rng.random(n))
        loss = LossSpec.absolute() if trial % 2 == 0 else LossSpec.squared()
        mixed = expected_loss(mixture(sources, lam), h, f, loss)
        weighted = sum(w * expected_loss(q, h, f, loss) for w, q in zip(lam.weights, sources))
        assert abs(mixed - weighted) <= 1e-12


def test_expected_loss_stays_within_zero_and_m():
    rng = np.random.default_rng(31)
    for trial in range(500):
        n = int(rng.integers(1, 51))
        s = Support.of_size(n)
        p = Dist(s, rng.dirichlet(np.ones(n)))
        bound = float(rng.uniform(0.5, 3.0))
        h = Hypothesis(s, rng.uniform(0.0, bound, n), bound)
        f = Hypothesis(s, rng.uniform(0.0, bound, n), bound)
        for loss in (LossSpec.absolute(bound), LossSpec.squared(bound)):
            assert 0.0 <= expected_loss(p, h, f, loss) <= loss.bound_M
        hb = Hypothesis(s, rng.integers(0, 2, n).astype(float))
        fb = Hypothesis(s, rng.integers(0, 2, n).astype(float))
        assert 0.0 <= expected_loss(p, hb, fb, LossSpec.zero_one()) <= 1.0


@pytest.mark.parametrize("loss", [LossSpec.absolute(), LossSpec.squared()])
def test_convex_combination_never_beats_the_weighted_losses(loss):
    rng = np.random.default_rng(17)
    for _ in range(500):
        n, k = int(rng.integers(1, 30)), int(rng.integers(1, 6))
        xs = rng.random((k, n))
        y = rng.random(n)
        w = rng.dirichlet(np.ones(k))
        combined = pointwise_loss(loss, w @ xs, y)
        weighted = sum(wi * pointwise_loss(loss, xi, y) for wi, xi in zip(w, xs))
        assert np.all(combined <= weighted + 1e-12)
