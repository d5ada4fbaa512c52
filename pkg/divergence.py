"""
Rényi entropy and divergence of discrete distributions, in bits.

The orders 0, 1 and infinity are closed-form branches; finite orders are
evaluated in log space so that large alpha does not overflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np
from scipy.special import logsumexp, rel_entr
from scipy.stats import entropy as shannon_entropy

from core_model import Dist, InputValidationError, check_same_support

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)


class AlphaKind(str, Enum):
    FINITE = "finite"
    ZERO = "zero"
    ONE = "one"
    INFINITY = "infinity"


@dataclass(frozen=True)
class AlphaOrder:
    """Order alpha of a Rényi quantity."""

    kind: AlphaKind
    finite_value: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "kind", AlphaKind(self.kind))
        if self.kind is AlphaKind.FINITE:
            a = float(self.finite_value)
            if not (math.isfinite(a) and a > 0 and a != 1.0):
                raise InputValidationError(
                    f"finite alpha must be > 0 and != 1 (use the dedicated orders), got {self.finite_value!r}"
                )

    @classmethod
    def of(cls, value: float) -> "AlphaOrder":
        """Map a number onto its order, routing 0, 1 and inf to their variants."""
        value = float(value)
        if value == 0.0:
            return cls(AlphaKind.ZERO)
        if value == 1.0:
            return cls(AlphaKind.ONE)
        if math.isinf(value) and value > 0:
            return cls(AlphaKind.INFINITY)
        return cls(AlphaKind.FINITE, value)

    @classmethod
    def parse(cls, text: str) -> "AlphaOrder":
        key = text.strip().lower()
        if key == "zero":
            return cls(AlphaKind.ZERO)
        if key == "one":
            return cls(AlphaKind.ONE)
        if key in ("inf", "infinity", "+inf"):
            return cls(AlphaKind.INFINITY)
        try:
            return cls.of(float(key))
        except ValueError:
            raise InputValidationError(f"cannot parse alpha from {text!r}") from None

    @property
    def value(self) -> float:
        if self.kind is AlphaKind.ZERO:
            return 0.0
        if self.kind is AlphaKind.ONE:
            return 1.0
        if self.kind is AlphaKind.INFINITY:
            return math.inf
        return float(self.finite_value)

    @property
    def is_infinite(self) -> bool:
        return self.kind is AlphaKind.INFINITY

    def __str__(self) -> str:
        if self.kind is AlphaKind.FINITE:
            return repr(self.finite_value)
        return "inf" if self.is_infinite else self.kind.value


AlphaLike = Union[AlphaOrder, float, int]


def as_alpha(alpha: AlphaLike) -> AlphaOrder:
    return alpha if isinstance(alpha, AlphaOrder) else AlphaOrder.of(alpha)


@dataclass(frozen=True)
class DivergenceValue:
    """D_alpha(P||Q) in bits; +inf when P charges a Q-null point."""

    bits: float

    def __post_init__(self):
        if math.isnan(self.bits) or self.bits < 0:
            raise InputValidationError(f"divergence must be non-negative, got {self.bits!r}")

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.bits)

    def __float__(self) -> float:
        return self.bits


def renyi_entropy(p: Dist, alpha: AlphaLike) -> float:
    """
    Rényi entropy H_alpha(P) in bits.

    Args:
        p: Distribution.
        alpha: Order; zero gives log2|supp(P)|, one the Shannon entropy,
            infinity the min-entropy.

    Returns:
        The entropy, a non-negative number of bits.
    """
    order = as_alpha(alpha)
    pos = p.probs[p.probs > 0]
    if order.kind is AlphaKind.ZERO:
        h = math.log2(pos.size)
    elif order.kind is AlphaKind.ONE:
        h = float(shannon_entropy(pos, base=2))
    elif order.kind is AlphaKind.INFINITY:
        h = -math.log2(float(pos.max()))
    else:
        a = order.value
        h = float(logsumexp(a * np.log(pos))) / ((1.0 - a) * LN2)
    return max(h, 0.0)


def escort_divergence(p_vals: np.ndarray, q_vals: np.ndarray, a: float) -> Tuple[float, np.ndarray]:
    """
    Divergence in nats and its escort weights, for a >= 1 on points with P > 0.

    The escort weights are w(x) = P^a(x) Q^{1-a}(x) / sum_y P^a(y) Q^{1-a}(y)
    (just P for a = 1); the gradient of the divergence with respect to a
    mixing weight of Q is -sum_x w(x) Q_i(x) / Q(x).

    Args:
        p_vals: Target probabilities, all strictly positive.
        q_vals: Model probabilities on the same points.
        a: Order, finite and >= 1.

    Returns:
        (divergence in nats, escort weights); the divergence is inf when
        some q value is zero.
    """
    if np.any(q_vals <= 0):
        return math.inf, np.full_like(p_vals, np.nan)
    log_p = np.log(p_vals)
    log_ratio = log_p - np.log(q_vals)
    if a == 1.0:
        nats = float(rel_entr(p_vals, q_vals).sum())
        return nats, p_vals / p_vals.sum()
    terms = log_p + (a - 1.0) * log_ratio
    lse = float(logsumexp(terms))
    nats = (lse - float(logsumexp(log_p))) / (a - 1.0)
    return nats, np.exp(terms - lse)


def renyi_divergence(p: Dist, q: Dist, alpha: AlphaLike) -> DivergenceValue:
    """
    Rényi divergence D_alpha(P||Q) in bits.

    Infinite divergence is returned as a value, never raised.
    """
    order = as_alpha(alpha)
    if order.kind is AlphaKind.ZERO:
        raise InputValidationError("the order-0 divergence is not defined")
    check_same_support(p, q)

    mask = p.probs > 0
    pm, qm = p.probs[mask], q.probs[mask]
    uncovered = bool(np.any(qm == 0))

    if order.kind is AlphaKind.INFINITY:
        bits = math.inf if uncovered else math.log2(float(np.max(pm / qm)))
    elif order.kind is AlphaKind.ONE or order.value > 1:
        if uncovered:
            bits = math.inf
        else:
            nats, _ = escort_divergence(pm, qm, order.value)
            bits = nats / LN2
    else:
        # 0 < alpha < 1: points with Q(x) = 0 contribute nothing
        shared = qm > 0
        if not np.any(shared):
            bits = math.inf
        else:
            a = order.value
            log_p = np.log(pm)
            terms = log_p[shared] + (a - 1.0) * (log_p[shared] - np.log(qm[shared]))
            bits = (float(logsumexp(terms)) - float(logsumexp(log_p))) / ((a - 1.0) * LN2)
    return DivergenceValue(max(bits, 0.0))


def renyi_divergence_bits(p: Dist, q: Dist, alpha: AlphaLike) -> float:
    return renyi_divergence(p, q, alpha).bits


def exp2_bits(bits: float) -> float:
    """2**bits with +inf for infinite or overflowing exponents."""
    if math.isinf(bits) or bits > 1023:
        return math.inf
    return 2.0 ** bits


def d_alpha(p: Dist, q: Dist, alpha: AlphaLike) -> float:
    """d_alpha(P||Q) = 2^{D_alpha(P||Q)}, always >= 1."""
    return exp2_bits(renyi_divergence(p, q, alpha).bits)
