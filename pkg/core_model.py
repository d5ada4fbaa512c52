"""
Core vocabulary shared by every other module: finite supports, probability
distributions, simplex weights, tabulated hypotheses and loss functions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PROB_TOL = 1e-9
WEIGHT_TOL = 1e-12
MIXTURE_DRIFT_TOL = 1e-12


class InputValidationError(ValueError):
    """Raised when an input violates a precondition or a type invariant."""


class SupportMismatchError(InputValidationError):
    """Raised when objects that must share one support do not."""


class InfeasibleFitError(InputValidationError):
    """Raised when the target charges a point that no source charges."""


class SolverConvergenceError(RuntimeError):
    """Raised by the command line when a solver stops before converging."""


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise InputValidationError(f"{name} must be a 1-D sequence of numbers")
    if not np.all(np.isfinite(arr)):
        raise InputValidationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Support:
    """Ordered, finite set of opaque point identifiers."""

    points: tuple
    coords: Optional[np.ndarray] = None
    _index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        points = tuple(str(p) for p in self.points)
        if not points:
            raise InputValidationError("support must be nonempty")
        index = {p: i for i, p in enumerate(points)}
        if len(index) != len(points):
            raise InputValidationError("support point identifiers must be unique")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "_index", index)

        if self.coords is not None:
            coords = np.array(self.coords, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            if coords.shape[0] != len(points):
                raise InputValidationError(
                    f"coords has {coords.shape[0]} rows but the support has {len(points)} points"
                )
            coords.setflags(write=False)
            object.__setattr__(self, "coords", coords)

    @classmethod
    def of_size(cls, n: int, prefix: str = "x") -> "Support":
        return cls(tuple(f"{prefix}{i}" for i in range(n)))

    @property
    def size(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def index_of(self, point: str) -> int:
        try:
            return self._index[point]
        except KeyError:
            raise InputValidationError(f"unknown support point: {point!r}") from None

    def matches(self, other: "Support") -> bool:
        return self is other or self.points == other.points


@dataclass(frozen=True, eq=False)
class Dist:
    """Probability vector over a Support."""

    support: Support
    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen_array(self.probs, "probs")
        if probs.shape[0] != self.support.size:
            raise InputValidationError(
                f"probs has length {probs.shape[0]} but the support has {self.support.size} points"
            )
        if np.any(probs < 0):
            raise InputValidationError("probabilities must be non-negative")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise InputValidationError(f"probabilities sum to {total!r}, expected 1 within {PROB_TOL}")
        object.__setattr__(self, "probs", probs)

    @property
    def size(self) -> int:
        return self.support.size

    def support_mask(self) -> np.ndarray:
        """Boolean mask of supp(P) = {x : P(x) > 0}."""
        return self.probs > 0


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    """A point of the k-simplex."""

    weights: np.ndarray

    def __post_init__(self):
        weights = _frozen_array(self.weights, "weights")
        if weights.shape[0] == 0:
            raise InputValidationError("simplex weights must have at least one entry")
        if np.any(weights < 0):
            raise InputValidationError("simplex weights must be non-negative")
        total = float(weights.sum())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise InputValidationError(f"simplex weights sum to {total!r}, expected 1 within {WEIGHT_TOL}")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, k: int) -> "SimplexWeights":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def vertex(cls, k: int, i: int) -> "SimplexWeights":
        w = np.zeros(k)
        w[i] = 1.0
        return cls(w)

    @classmethod
    def from_unnormalized(cls, values) -> "SimplexWeights":
        """Clip negatives to zero and rescale onto the simplex."""
        w = np.clip(np.asarray(values, dtype=float), 0.0, None)
        total = w.sum()
        if not np.isfinite(total) or total <= 0:
            raise InputValidationError("cannot normalize weights with zero or non-finite mass")
        return cls(w / total)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    def tolist(self) -> list:
        return [float(w) for w in self.weights]


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """Real-valued function tabulated over a Support, with values in [0, range_bound]."""

    support: Support
    values: np.ndarray
    range_bound: float = 1.0

    def __post_init__(self):
        values = _frozen_array(self.values, "values")
        if values.shape[0] != self.support.size:
            raise InputValidationError(
                f"values has length {values.shape[0]} but the support has {self.support.size} points"
            )
        bound = float(self.range_bound)
        if not np.isfinite(bound) or bound < 0:
            raise InputValidationError(f"range_bound must be a finite non-negative number, got {bound!r}")
        if np.any(values < 0) or np.any(values > bound):
            raise InputValidationError(f"hypothesis values must lie in [0, {bound}]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "range_bound", bound)

    def is_boolean(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))


class LossKind(str, Enum):
    ABSOLUTE = "absolute"
    ZERO_ONE = "zero_one"
    SQUARED = "squared"


@dataclass(frozen=True)
class LossSpec:
    """
    Loss function description.

    Args:
        kind: Which loss L is.
        bound_M: Upper bound M on L over the hypotheses' range.
        beta: Relaxed triangle-inequality factor; 1 means the exact triangle inequality.
        convex_first: L is convex in its first argument.
        convex_both: L is jointly convex in both arguments.
    """

    kind: LossKind
    bound_M: float
    beta: float = 1.0
    convex_first: bool = True
    convex_both: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if not self.bound_M > 0:
            raise InputValidationError(f"bound_M must be > 0, got {self.bound_M!r}")
        if not self.beta >= 1:
            raise InputValidationError(f"beta must be >= 1, got {self.beta!r}")
        if self.kind is LossKind.ZERO_ONE and self.bound_M != 1.0:
            raise InputValidationError("the zero_one loss has M = 1")

    @classmethod
    def absolute(cls, range_bound: float = 1.0) -> "LossSpec":
        return cls(LossKind.ABSOLUTE, bound_M=float(range_bound), beta=1.0)

    @classmethod
    def squared(cls, range_bound: float = 1.0) -> "LossSpec":
        # (a + b)^2 <= 2a^2 + 2b^2
        return cls(LossKind.SQUARED, bound_M=float(range_bound) ** 2, beta=2.0)

    @classmethod
    def zero_one(cls) -> "LossSpec":
        return cls(LossKind.ZERO_ONE, bound_M=1.0, beta=1.0, convex_first=False, convex_both=False)

    @classmethod
    def from_name(cls, name: str, range_bound: float = 1.0) -> "LossSpec":
        kind = LossKind(name)
        if kind is LossKind.ABSOLUTE:
            return cls.absolute(range_bound)
        if kind is LossKind.SQUARED:
            return cls.squared(range_bound)
        return cls.zero_one()

    def check_range(self, range_bound: float) -> None:
        """Reject hypotheses whose range is not covered by M."""
        if self.kind is LossKind.ABSOLUTE:
            needed = range_bound
        elif self.kind is LossKind.SQUARED:
            needed = range_bound ** 2
        else:
            needed = 1.0
        if needed > self.bound_M * (1 + 1e-12):
            raise InputValidationError(
                f"{self.kind.value} loss with range bound {range_bound} needs M >= {needed}, got {self.bound_M}"
            )


def pointwise_loss(loss: LossSpec, h_values: np.ndarray, f_values: np.ndarray) -> np.ndarray:
    """Evaluate L(h(x), f(x)) at every point."""
    h_values = np.asarray(h_values, dtype=float)
    f_values = np.asarray(f_values, dtype=float)
    if loss.kind is LossKind.ABSOLUTE:
        return np.abs(h_values - f_values)
    if loss.kind is LossKind.SQUARED:
        return (h_values - f_values) ** 2
    for name, vals in (("h", h_values), ("f", f_values)):
        if not np.all((vals == 0.0) | (vals == 1.0)):
            raise InputValidationError(f"zero_one loss requires Boolean {name} values in {{0, 1}}")
    return (h_values != f_values).astype(float)


def check_same_support(*objects) -> Support:
    """Return the common Support of Dist/Hypothesis objects, or raise."""
    support = objects[0].support
    for obj in objects[1:]:
        if not support.matches(obj.support):
            raise SupportMismatchError("all distributions and hypotheses must share one support")
    return support


def stack_probs(sources: Sequence[Dist], support: Optional[Support] = None) -> np.ndarray:
    """Stack source probability vectors into a (k, n) matrix after a support check."""
    if len(sources) == 0:
        raise InputValidationError("at least one source distribution is required")
    common = check_same_support(*sources)
    if support is not None and not support.matches(common):
        raise SupportMismatchError("sources do not share the target's support")
    return np.vstack([q.probs for q in sources])


def stack_values(hyps: Sequence[Hypothesis]) -> np.ndarray:
    return np.vstack([h.values for h in hyps])


def _bounded_losses(loss: LossSpec, h: Hypothesis, f: Hypothesis) -> np.ndarray:
    # M must cover the range of both functions
    loss.check_range(max(h.range_bound, f.range_bound))
    return pointwise_loss(loss, h.values, f.values)


def expected_loss(p: Dist, h: Hypothesis, f: Hypothesis, loss: LossSpec) -> float:
    """
    Average loss L_P(h, f) = sum_x P(x) L(h(x), f(x)).

    Args:
        p: Distribution the expectation is taken under.
        h: Hypothesis being evaluated.
        f: Target function.
        loss: Loss specification.

    Returns:
        The expected loss, a value in [0, M].

    Raises:
        InputValidationError: If M does not cover the range of h and f.
    """
    check_same_support(p, h, f)
    return float(p.probs @ _bounded_losses(loss, h, f))


def expected_power_loss(q: Dist, h: Hypothesis, f: Hypothesis, loss: LossSpec, exponent: float) -> float:
    """E_Q[L^exponent(h(x), f(x))] for exponent >= 1."""
    if not exponent >= 1:
        raise InputValidationError(f"exponent must be >= 1, got {exponent!r}")
    check_same_support(q, h, f)
    losses = _bounded_losses(loss, h, f)
    if exponent == 1:
        return float(q.probs @ losses)
    return float(q.probs @ np.power(losses, exponent))


def mixture(sources: Sequence[Dist], weights: SimplexWeights) -> Dist:
    """Q_lambda = sum_i lambda_i Q_i."""
    Q = stack_probs(sources)
    if weights.k != Q.shape[0]:
        raise InputValidationError(f"{weights.k} weights given for {Q.shape[0]} sources")
    mixed = weights.weights @ Q
    drift = float(mixed.sum()) - 1.0
    if abs(drift) > MIXTURE_DRIFT_TOL:
        logger.debug(f"mixture mass drift {drift:.3e}")
    return Dist(sources[0].support, np.clip(mixed, 0.0, None))


def uniform_dist(support: Support) -> Dist:
    """Uniform distribution U over the support."""
    if support.size == 0:
        raise InputValidationError("support must be nonempty")
    return Dist(support, np.full(support.size, 1.0 / support.size))
