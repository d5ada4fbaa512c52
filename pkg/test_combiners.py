#!/usr/bin/env python3
"""
Tests for the combining rules.
"""

import math

import numpy as np
import pytest

from combiners import (
    CombinerParams,
    CombinerRule,
    combine,
    combine_distribution_weighted,
    combine_r_norm,
    combine_smoothed,
    r_norm_weights,
)
from core_model import Dist, Hypothesis, InputValidationError, SimplexWeights, Support

S2 = Support.of_size(2)
Q1, Q2 = Dist(S2, [0.6, 0.4]), Dist(S2, [0.2, 0.8])
ONE, ZERO = Hypothesis(S2, [1.0, 1.0]), Hypothesis(S2, [0.0, 0.0])


def test_distribution_weighted_examples():
    h = combine_distribution_weighted([Q1, Q2], [ONE, ZERO], SimplexWeights.uniform(2))
    np.testing.assert_allclose(h.values, [0.75, 1.0 / 3.0], atol=1e-15)

    disjoint = [Dist(S2, [1.0, 0.0]), Dist(S2, [0.0, 1.0])]
    h = combine_distribution_weighted(disjoint, [ONE, ZERO], SimplexWeights.uniform(2))
    np.testing.assert_array_equal(h.values, [1.0, 0.0])

    single = Hypothesis(S2, [0.3, 0.9])
    h = combine_distribution_weighted([Q1], [single], SimplexWeights.vertex(1, 0))
    np.testing.assert_allclose(h.values, single.values)


def test_distribution_weighted_uncharged_point_is_zero():
    q = Dist(S2, [1.0, 0.0])
    h = combine_distribution_weighted([q, q], [ONE, ONE], SimplexWeights.uniform(2))
    np.testing.assert_array_equal(h.values, [1.0, 0.0])


def test_identical_sources_collapse():
    h = Hypothesis(S2, [0.2, 0.7])
    for lam in ([0.5, 0.5], [0.9, 0.1]):
        w = SimplexWeights(lam)
        np.testing.assert_allclose(combine_distribution_weighted([Q1, Q1], [h, h], w).values, h.values)
        np.testing.assert_allclose(combine_smoothed([Q1, Q2], [h, h], w, 0.3).values, h.values)


def test_smoothed_tends_to_distribution_weighted():
    w = SimplexWeights([0.3, 0.7])
    dw = combine_distribution_weighted([Q1, Q2], [ONE, ZERO], w)
    sm = combine_smoothed([Q1, Q2], [ONE, ZERO], w, 1e-12)
    np.testing.assert_allclose(sm.values, dw.values, atol=1e-9)
    with pytest.raises(InputValidationError):
        combine_smoothed([Q1, Q2], [ONE, ZERO], w, 1.0)


def test_smoothed_covers_uncharged_points():
    q = Dist(S2, [1.0, 0.0])
    h = combine_smoothed([q, q], [ONE, ZERO], SimplexWeights.uniform(2), 0.5)
    # only the uniform part reaches the second point, split evenly over sources
    assert h.values[1] == pytest.approx(0.5)


def test_r_norm_examples():
    np.testing.assert_allclose(combine_r_norm([Q1, Q2], [ONE, ZERO], 1.0).values, [0.75, 1.0 / 3.0], atol=1e-15)
    np.testing.assert_array_equal(combine_r_norm([Q1, Q2], [ONE, ZERO], math.inf).values, [1.0, 0.0])
    mean = combine_r_norm([Q1, Q1], [ONE, Hypothesis(S2, [0.0, 0.5])], 3.0)
    np.testing.assert_allclose(mean.values, [0.5, 0.75])


def test_r_norm_ties_and_uncovered_points():
    s = Support.of_size(3)
    a, b = Dist(s, [0.5, 0.5, 0.0]), Dist(s, [0.5, 0.5, 0.0])
    h1, h2 = Hypothesis(s, [1.0, 1.0, 1.0]), Hypothesis(s, [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(combine_r_norm([a, b], [h1, h2], math.inf).values, [1.0, 1.0, 0.0])
    np.testing.assert_array_equal(combine_r_norm([a, b], [h1, h2], 2.0).values, [0.5, 0.5, 0.0])


def test_r_norm_approaches_argmax_rule():
    rng = np.random.default_rng(3)
    for _ in range(100):
        Q = rng.dirichlet(np.ones(5), size=3)
        w = r_norm_weights(Q, 100.0)
        ordered = np.sort(Q, axis=0)
        clear = ordered[-1] >= 1.1 * ordered[-2]
        top = np.argmax(Q, axis=0)
        assert np.all(w[top, np.arange(5)][clear] >= 1 - 1e-4)


def test_combiner_params():
    with pytest.raises(InputValidationError):
        CombinerParams(CombinerRule.R_NORM, r=0.5)
    with pytest.raises(InputValidationError):
        CombinerParams(CombinerRule.DISTRIBUTION_WEIGHTED)
    with pytest.raises(InputValidationError):
        CombinerParams(CombinerRule.DISTRIBUTION_WEIGHTED, weights=SimplexWeights.uniform(2), eta=0.1)
    params = CombinerParams("smoothed", weights=SimplexWeights.uniform(2), eta=0.1)
    h = combine([Q1, Q2], [ONE, ZERO], params)
    np.testing.assert_allclose(h.values, combine_smoothed([Q1, Q2], [ONE, ZERO], SimplexWeights.uniform(2), 0.1).values)


def test_mismatched_inputs():
    with pytest.raises(InputValidationError):
        combine_distribution_weighted([Q1, Q2], [ONE], SimplexWeights.uniform(2))
    with pytest.raises(InputValidationError):
        combine_distribution_weighted([Q1, Q2], [ONE, ZERO], SimplexWeights.uniform(3))
