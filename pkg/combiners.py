"""
Rules that combine source hypotheses h_1..h_k into one hypothesis, weighting
each h_i pointwise by how much its source distribution charges the point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from core_model import (
    Dist,
    Hypothesis,
    InputValidationError,
    SimplexWeights,
    Support,
    check_same_support,
    stack_probs,
    stack_values,
)

logger = logging.getLogger(__name__)


class CombinerRule(str, Enum):
    DISTRIBUTION_WEIGHTED = "dw"
    SMOOTHED = "smoothed"
    R_NORM = "rnorm"


@dataclass(frozen=True)
class CombinerParams:
    rule: CombinerRule
    weights: Optional[SimplexWeights] = None
    eta: float = 0.0
    r: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "rule", CombinerRule(self.rule))
        if self.rule is CombinerRule.R_NORM:
            if self.r is None or not self.r >= 1:
                raise InputValidationError(f"r-norm combiners need r >= 1, got {self.r!r}")
            if self.eta != 0:
                raise InputValidationError("eta is only used by the smoothed rule")
            return
        if self.weights is None:
            raise InputValidationError(f"the {self.rule.value} rule needs simplex weights")
        if self.rule is CombinerRule.SMOOTHED:
            if not 0 <= self.eta < 1:
                raise InputValidationError(f"eta must lie in [0, 1), got {self.eta!r}")
        elif self.eta != 0:
            raise InputValidationError("eta is only used by the smoothed rule")


def _prepare(sources: Sequence[Dist], hyps: Sequence[Hypothesis]) -> Tuple[Support, np.ndarray, np.ndarray, float]:
    if len(sources) == 0 or len(sources) != len(hyps):
        raise InputValidationError(
            f"need equal, nonzero numbers of sources and hypotheses, got {len(sources)} and {len(hyps)}"
        )
    support = check_same_support(*sources, *hyps)
    bound = max(h.range_bound for h in hyps)
    return support, stack_probs(sources), stack_values(hyps), bound


def _check_weights(weights: SimplexWeights, k: int) -> np.ndarray:
    if weights.k != k:
        raise InputValidationError(f"{weights.k} weights given for {k} sources")
    return weights.weights


def _weighted_values(W: np.ndarray, H: np.ndarray, denom: np.ndarray) -> np.ndarray:
    """sum_i W_i(x) H_i(x) / denom(x), and 0 where denom(x) = 0."""
    covered = denom > 0
    values = np.zeros(H.shape[1])
    values[covered] = (W[:, covered] * H[:, covered]).sum(axis=0) / denom[covered]
    return values


def combine_distribution_weighted(
    sources: Sequence[Dist], hyps: Sequence[Hypothesis], z: SimplexWeights
) -> Hypothesis:
    """
    Distribution-weighted rule h_z(x) = sum_i z_i Q_i(x) h_i(x) / sum_j z_j Q_j(x).

    Points no weighted source charges get value 0.
    """
    support, Q, H, bound = _prepare(sources, hyps)
    W = _check_weights(z, Q.shape[0])[:, None] * Q
    values = _weighted_values(W, H, W.sum(axis=0))
    return Hypothesis(support, np.clip(values, 0.0, bound), bound)


def smoothed_values(Q: np.ndarray, H: np.ndarray, lam: np.ndarray, eta: float) -> np.ndarray:
    """Vectorized h_{lambda,eta}; lam may be one weight vector (k,) or a batch (c, k)."""
    k, n = Q.shape
    u = 1.0 / n
    num = lam @ (Q * H) + (eta / k) * u * H.sum(axis=0)
    den = lam @ Q + eta * u
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return values


def combine_smoothed(
    sources: Sequence[Dist], hyps: Sequence[Hypothesis], lam: SimplexWeights, eta: float
) -> Hypothesis:
    """
    Uniform-smoothed rule h_{lambda,eta}.

    Each h_i is weighted by (lambda_i Q_i(x) + (eta/k) U(x)) / (sum_j lambda_j Q_j(x) + eta U(x)),
    so the denominator is strictly positive for every point once eta > 0.
    """
    if not 0 <= eta < 1:
        raise InputValidationError(f"eta must lie in [0, 1), got {eta!r}")
    support, Q, H, bound = _prepare(sources, hyps)
    values = smoothed_values(Q, H, _check_weights(lam, Q.shape[0]), eta)
    return Hypothesis(support, np.clip(values, 0.0, bound), bound)


def r_norm_weights(Q: np.ndarray, r: float) -> np.ndarray:
    """
    Pointwise weights Q_i^r / sum_j Q_j^r, shape (k, n).

    r = inf puts all weight on the first argmax source. Columns where every
    Q_j(x) = 0 are all zero.
    """
    k, n = Q.shape
    covered = Q.max(axis=0) > 0
    weights = np.zeros((k, n))
    if math.isinf(r):
        top = np.argmax(Q, axis=0)
        cols = np.nonzero(covered)[0]
        weights[top[cols], cols] = 1.0
        return weights
    with np.errstate(divide="ignore"):
        log_q = np.log(Q[:, covered])
    weights[:, covered] = softmax(r * log_q, axis=0)
    return weights


def combine_r_norm(sources: Sequence[Dist], hyps: Sequence[Hypothesis], r: float) -> Hypothesis:
    """
    r-norm combination; r = 1 is the uniform rule, r = inf the maximum rule.

    Args:
        sources: Source distributions Q_1..Q_k.
        hyps: Source hypotheses h_1..h_k.
        r: Norm order, >= 1 or inf.

    Returns:
        The combined hypothesis.
    """
    if not r >= 1:
        raise InputValidationError(f"r must be >= 1, got {r!r}")
    support, Q, H, bound = _prepare(sources, hyps)
    values = (r_norm_weights(Q, r) * H).sum(axis=0)
    return Hypothesis(support, np.clip(values, 0.0, bound), bound)


def combine(sources: Sequence[Dist], hyps: Sequence[Hypothesis], params: CombinerParams) -> Hypothesis:
    if params.rule is CombinerRule.DISTRIBUTION_WEIGHTED:
        return combine_distribution_weighted(sources, hyps, params.weights)
    if params.rule is CombinerRule.SMOOTHED:
        return combine_smoothed(sources, hyps, params.weights, params.eta)
    return combine_r_norm(sources, hyps, params.r)
