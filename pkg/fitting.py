"""
Mixture fitting over the probability simplex.

fit_mixture finds the source mixture closest to a known target in Rényi
divergence; robust_fit picks smoothed combination weights without seeing
the target; adversarial_target builds the target that makes the single
source loss bound nearly tight.
"""

from __future__ import annotations

import itertools
import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_serializer
from scipy.optimize import linprog
from scipy.special import logsumexp, softmax

from combiners import smoothed_values
from core_model import (
    Dist,
    Hypothesis,
    InfeasibleFitError,
    InputValidationError,
    LossKind,
    LossSpec,
    SimplexWeights,
    check_same_support,
    expected_loss,
    pointwise_loss,
    stack_probs,
    stack_values,
)
from divergence import (
    LN2,
    AlphaKind,
    AlphaLike,
    as_alpha,
    d_alpha,
    escort_divergence,
    renyi_divergence,
)
logger = logging.getLogger(__name__)

DEFAULT_FIT_TOL = 1e-9
DEFAULT_FIT_MAX_ITERS = 100_000
DEFAULT_ROBUST_ETA = 1e-3
DEFAULT_ROBUST_DELTA = 1e-3
DEFAULT_ROBUST_MAX_ITERS = 10_000

LATTICE_STEPS = 100
_LATTICE_CHUNK = 512
_MAX_HALVINGS = 60
SNAP_WEIGHT = 1e-3
_ROBUST_PATIENCE = 1000


class FitResult(BaseModel):
    """Weights of the best mixture and D_alpha(P||Q_lambda) there, in bits."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: SimplexWeights
    objective_bits: float
    iterations: int
    converged: bool
    gap_bits: float = 0.0

    @field_serializer("weights")
    def _dump_weights(self, weights: SimplexWeights) -> List[float]:
        return weights.tolist()


class RobustFitResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: SimplexWeights
    eta: float
    worst_source_loss: float
    delta: float
    epsilon: float
    iterations: int
    converged: bool

    @field_serializer("weights")
    def _dump_weights(self, weights: SimplexWeights) -> List[float]:
        return weights.tolist()


class AdversarialTarget(BaseModel):
    """Target distribution concentrating extra mass on the error set of h."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    p: Dist
    r_factor: float
    delta_alpha: float
    realized_divergence_bits: float
    realized_loss: float
    epsilon: float
    alpha: float


def _check_fit_order(alpha: AlphaLike):
    order = as_alpha(alpha)
    if order.kind is AlphaKind.ZERO or (order.kind is AlphaKind.FINITE and order.value < 1):
        raise InputValidationError(f"mixture fitting needs alpha >= 1, got {order}")
    return order


def _fit_infinity(pm: np.ndarray, Qm: np.ndarray) -> FitResult:
    """
    Exact alpha = inf fit as a linear program.

    Maximizes s subject to sum_i lambda_i Q_i(x) >= s P(x) on supp(P) and
    lambda on the simplex; then D_inf(P||Q_lambda) = -log2 s.
    """
    k, m = Qm.shape
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-Qm.T, pm[:, None]])
    b_ub = np.zeros(m)
    A_eq = np.hstack([np.ones((1, k)), np.zeros((1, 1))])
    bounds = [(0.0, 1.0)] * k + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0 or res.x is None:
        logger.warning(f"alpha=inf linear program did not solve: {res.message}")
        weights = SimplexWeights.uniform(k)
        converged = False
        iterations = int(getattr(res, "nit", 0) or 0)
    else:
        weights = SimplexWeights.from_unnormalized(res.x[:k])
        converged = True
        iterations = int(res.nit)
    mixed = weights.weights @ Qm
    bits = math.log2(float(np.max(pm / mixed))) if np.all(mixed > 0) else math.inf
    return FitResult(weights=weights, objective_bits=max(bits, 0.0), iterations=iterations, converged=converged)


def _first_order_gap(lam: np.ndarray, Qm: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, float]:
    d = Qm @ (w / (lam @ Qm))
    return d, max(float(d.max()) - 1.0, 0.0) / LN2


def _snap_to_face(
    pm: np.ndarray, Qm: np.ndarray, a: float, lam: np.ndarray, nats: float, gap: float, tol: float
):
    """
    Zero the smallest weights when that does not hurt the fit.

    Drops the j smallest weights below SNAP_WEIGHT, largest j first, and keeps
    the first candidate whose objective is no worse and whose gap is within
    max(gap, tol). Returns (lam, nats, gap) or None.
    """
    order = np.argsort(lam)
    small = int(np.sum(lam[order[:-1]] <= SNAP_WEIGHT))
    flat = 4.0 * np.finfo(float).eps * max(1.0, abs(nats))
    for j in range(small, 0, -1):
        cand = lam.copy()
        cand[order[:j]] = 0.0
        cand /= cand.sum()
        cand_nats, cand_w = escort_divergence(pm, cand @ Qm, a)
        if not cand_nats <= nats + flat:
            continue
        _, cand_gap = _first_order_gap(cand, Qm, cand_w)
        if cand_gap <= max(gap, tol):
            logger.debug(f"snapped {j} weights to zero, objective {cand_nats / LN2:.12g} bits")
            return cand, cand_nats, cand_gap
    return None


def _fit_exponentiated_gradient(pm: np.ndarray, Qm: np.ndarray, a: float, tol: float, max_iters: int) -> FitResult:
    """
    Exponentiated-gradient descent on D_a(P||Q_lambda), a >= 1.

    The negative gradient in lambda_i is d_i = sum_x w(x) Q_i(x) / Q_lambda(x),
    with w the escort weights. Since sum_i lambda_i d_i = 1 and the divergence
    is convex in its second argument, max_i d_i - 1 bounds the optimality gap
    in nats.
    """
    k = Qm.shape[0]
    log_lam = np.full(k, -math.log(k))
    lam = np.exp(log_lam)
    nats, w = escort_divergence(pm, lam @ Qm, a)
    d, gap = _first_order_gap(lam, Qm, w)

    converged = False
    iterations = 0
    step = 1.0
    for iterations in range(1, max_iters + 1):
        if gap <= tol:
            converged = True
            break

        # near the optimum the objective is flat to float resolution, so a
        # step that keeps it level and shrinks the gap is also accepted
        flat = 4.0 * np.finfo(float).eps * max(1.0, abs(nats))
        step = min(1.0, 2.0 * step)
        accepted = None
        for _ in range(_MAX_HALVINGS):
            cand_log = log_lam + step * d
            cand_log -= logsumexp(cand_log)
            cand = np.exp(cand_log)
            cand_nats, cand_w = escort_divergence(pm, cand @ Qm, a)
            if cand_nats <= nats + flat:
                cand_d, cand_gap = _first_order_gap(cand, Qm, cand_w)
                if cand_nats < nats or cand_gap < gap:
                    accepted = (cand_log, cand, cand_nats, cand_w, cand_d, cand_gap)
                    break
            step *= 0.5
        if accepted is None:
            logger.debug(f"line search stalled at iteration {iterations} with gap {gap:.3e} bits")
            break
        log_lam, lam, nats, w, d, gap = accepted
        if iterations % 1000 == 0:
            logger.debug(f"iteration {iterations}: objective {nats / LN2:.12g} bits, gap {gap:.3e}")

    snapped = _snap_to_face(pm, Qm, a, lam, nats, gap, tol)
    if snapped is not None:
        lam, nats, gap = snapped

    converged = converged or gap <= tol
    if not converged:
        logger.warning(f"mixture fit stopped after {iterations} iterations with gap {gap:.3e} bits")
    return FitResult(
        weights=SimplexWeights.from_unnormalized(lam),
        objective_bits=max(nats / LN2, 0.0),
        iterations=iterations,
        converged=converged,
        gap_bits=gap,
    )


def fit_mixture(
    p: Dist,
    sources: Sequence[Dist],
    alpha: AlphaLike,
    tol: float = DEFAULT_FIT_TOL,
    max_iters: int = DEFAULT_FIT_MAX_ITERS,
) -> FitResult:
    """
    Find lambda minimizing D_alpha(P || sum_i lambda_i Q_i) over the simplex.

    Args:
        p: Target distribution.
        sources: Source distributions on the same support.
        alpha: Order, >= 1 or inf.
        tol: Optimality gap tolerance in bits.
        max_iters: Iteration cap for the finite-order solver.

    Returns:
        FitResult with the best weights found; converged is False when the
        iteration cap was hit first.

    Raises:
        InfeasibleFitError: If P charges a point no source charges.
    """
    order = _check_fit_order(alpha)
    Q = stack_probs(sources, p.support)
    mask = p.support_mask()
    pm, Qm = p.probs[mask], Q[:, mask]
    uncovered = Qm.max(axis=0) <= 0
    if np.any(uncovered):
        first = p.support.points[int(np.nonzero(mask)[0][np.argmax(uncovered)])]
        raise InfeasibleFitError(f"target charges point {first!r} that no source charges")

    k = Q.shape[0]
    if k == 1:
        weights = SimplexWeights.vertex(1, 0)
        bits = renyi_divergence(p, sources[0], order).bits
        return FitResult(weights=weights, objective_bits=bits, iterations=0, converged=True)

    if order.is_infinite:
        result = _fit_infinity(pm, Qm)
    else:
        result = _fit_exponentiated_gradient(pm, Qm, order.value, tol, max_iters)
    logger.debug(
        f"fit alpha={order}: weights={np.round(result.weights.weights, 6).tolist()} "
        f"objective={result.objective_bits:.6g} bits after {result.iterations} iterations"
    )
    return result


def simplex_lattice(k: int, steps: int = LATTICE_STEPS) -> np.ndarray:
    """All points of the simplex with coordinates in multiples of 1/steps, shape (c, k)."""
    if k == 1:
        return np.ones((1, 1))
    rows = []
    for head in itertools.product(range(steps + 1), repeat=k - 1):
        rest = steps - sum(head)
        if rest >= 0:
            rows.append(head + (rest,))
    return np.array(rows, dtype=float) / steps


def _loss_derivative(kind: LossKind, h: np.ndarray, f: np.ndarray) -> np.ndarray:
    if kind is LossKind.ABSOLUTE:
        return np.sign(h - f)
    return 2.0 * (h - f)


class _SmoothedGame:
    """Per-source losses of h_{lambda,eta} for one fixed robust-fit instance."""

    def __init__(self, Q, H, f_values, loss: LossSpec, eta: float, bound: float):
        self.Q = Q
        self.H = H
        self.f = f_values
        self.loss = loss
        self.eta = eta
        self.bound = bound
        self.u = 1.0 / Q.shape[1]

    def source_losses(self, lam: np.ndarray) -> np.ndarray:
        """Loss under each source; lam of shape (k,) gives (k,), (c, k) gives (c, k)."""
        h = np.clip(smoothed_values(self.Q, self.H, lam, self.eta), 0.0, self.bound)
        return pointwise_loss(self.loss, h, self.f) @ self.Q.T

    def worst(self, lam: np.ndarray) -> float:
        return float(self.source_losses(lam).max())

    def gradient(self, lam: np.ndarray, adversary: np.ndarray) -> np.ndarray:
        """Gradient in lambda of sum_i adversary_i L_{Q_i}(h_{lambda,eta}, f)."""
        den = lam @ self.Q + self.eta * self.u
        h = smoothed_values(self.Q, self.H, lam, self.eta)
        weight = (adversary @ self.Q) * _loss_derivative(self.loss.kind, h, self.f) / den
        return (self.Q * (self.H - h)) @ weight

    def best_on_lattice(self, k: int) -> np.ndarray:
        if k <= 3:
            grid = simplex_lattice(k)
        else:
            grid = np.vstack([np.eye(k), np.full((1, k), 1.0 / k)])
        best_lam, best_val = grid[0], math.inf
        for start in range(0, grid.shape[0], _LATTICE_CHUNK):
            chunk = grid[start:start + _LATTICE_CHUNK]
            worst = self.source_losses(chunk).max(axis=1)
            j = int(np.argmin(worst))
            if worst[j] < best_val:
                best_lam, best_val = chunk[j], float(worst[j])
        return best_lam


def robust_fit(
    sources: Sequence[Dist],
    hyps: Sequence[Hypothesis],
    f: Hypothesis,
    loss: LossSpec,
    eta: float = DEFAULT_ROBUST_ETA,
    delta: float = DEFAULT_ROBUST_DELTA,
    max_iters: int = DEFAULT_ROBUST_MAX_ITERS,
) -> RobustFitResult:
    """
    Choose lambda so that h_{lambda,eta} has small loss under every source.

    Solves min_lambda max_i L_{Q_i}(h_{lambda,eta}, f) approximately: a
    lattice warm start, then a repeated game in which an adversary runs
    multiplicative weights over the sources and the lambda player takes one
    exponentiated-gradient step against the adversary's mixture per round.
    The game stops once the worst source loss is within delta of epsilon, or
    after 1000 rounds without improvement.

    Args:
        sources: Source distributions Q_1..Q_k.
        hyps: Source hypotheses h_1..h_k.
        f: Target labeling function.
        loss: A loss convex in its first argument.
        eta: Uniform smoothing weight, in (0, 1).
        delta: Slack the game aims for above epsilon = max_i L_{Q_i}(h_i, f).
        max_iters: Number of game rounds.

    Returns:
        RobustFitResult with the best weights seen and their achieved slack.
    """
    if not 0 < eta < 1:
        raise InputValidationError(f"eta must lie in (0, 1), got {eta!r}")
    if not delta >= 0:
        raise InputValidationError(f"delta must be >= 0, got {delta!r}")
    if not loss.convex_first:
        raise InputValidationError(f"robust fitting needs a convex loss, got {loss.kind.value}")
    if len(sources) == 0 or len(sources) != len(hyps):
        raise InputValidationError("need equal, nonzero numbers of sources and hypotheses")
    check_same_support(*sources, *hyps, f)
    bound = max(h.range_bound for h in hyps)
    loss.check_range(max(bound, f.range_bound))

    epsilon = max(expected_loss(q, h, f, loss) for q, h in zip(sources, hyps))
    k = len(sources)
    game = _SmoothedGame(stack_probs(sources), stack_values(hyps), f.values, loss, eta, bound)
    target = epsilon + delta

    # Warm start from the lattice
    best_lam = game.best_on_lattice(k)
    best_val = game.worst(best_lam)
    iterations = 0

    if k > 1 and best_val > target:
        lr = math.sqrt(8.0 * math.log(k) / max_iters)
        log_adv = np.zeros(k)
        log_lam = np.log(np.clip(best_lam, 1e-12, None))
        log_lam -= logsumexp(log_lam)
        lam_sum = np.zeros(k)
        last_gain = 0
        for iterations in range(1, max_iters + 1):
            lam = np.exp(log_lam)
            losses = game.source_losses(lam)
            worst = float(losses.max())
            if worst < best_val - 1e-12:
                last_gain = iterations
            if worst < best_val:
                best_lam, best_val = lam, worst
            if best_val <= target or iterations - last_gain > _ROBUST_PATIENCE:
                break
            lam_sum += lam

            # Lambda player: one step against the adversary's mixture
            adversary = softmax(log_adv)
            g = game.gradient(lam, adversary)
            scale = float(np.abs(g).max())
            if scale > 0:
                log_lam = log_lam - (0.5 / math.sqrt(iterations)) * g / scale
                log_lam -= logsumexp(log_lam)

            # Adversary: multiplicative weights on the source losses
            log_adv += lr * losses / loss.bound_M

        # The averaged play can beat every single round
        if lam_sum.sum() > 0:
            average = lam_sum / lam_sum.sum()
            avg_val = game.worst(average)
            if avg_val < best_val:
                best_lam, best_val = average, avg_val
        logger.debug(f"robust fit game ran {iterations} rounds, worst source loss {best_val:.6g}")

    converged = best_val <= target
    if not converged:
        logger.warning(
            f"robust fit reached worst source loss {best_val:.6g}, above epsilon + delta = {target:.6g}"
        )
    return RobustFitResult(
        weights=SimplexWeights.from_unnormalized(best_lam),
        eta=eta,
        worst_source_loss=best_val,
        delta=max(0.0, best_val - epsilon),
        epsilon=epsilon,
        iterations=iterations,
        converged=converged,
    )


def _finite_order_above_one(alpha: AlphaLike) -> float:
    order = as_alpha(alpha)
    if order.kind is not AlphaKind.FINITE or order.value <= 1:
        raise InputValidationError(f"alpha must be a finite order > 1, got {order}")
    return order.value


def _error_set(q: Dist, h: Hypothesis, f: Hypothesis) -> np.ndarray:
    check_same_support(q, h, f)
    # raises on non-Boolean input
    pointwise_loss(LossSpec.zero_one(), h.values, f.values)
    return h.values != f.values


def adversarial_target(
    q: Dist, h: Hypothesis, f: Hypothesis, alpha: AlphaLike, delta_alpha: float
) -> AdversarialTarget:
    """
    Build P with D_alpha(P||Q) <= delta_alpha whose zero-one loss is as large as possible.

    P(x) = r Q(x) on Err = {x : h(x) != f(x)} and (1 - r eps)/(1 - eps) Q(x)
    elsewhere, with r = [(2^{(alpha-1) delta_alpha} - 1) / eps]^{1/alpha}.

    Raises:
        InputValidationError: If eps = Q(Err) is 0 or 1, delta_alpha is below
            log2(1 + eps)/(alpha - 1), or r eps > 1.
    """
    a = _finite_order_above_one(alpha)
    err = _error_set(q, h, f)
    eps = float(q.probs[err].sum())
    if not 0 < eps < 1:
        raise InputValidationError(f"error mass eps = {eps!r} must lie strictly between 0 and 1")
    floor = math.log2(1.0 + eps) / (a - 1.0)
    if delta_alpha < floor - 1e-12:
        raise InputValidationError(f"delta_alpha must be >= {floor!r} for eps = {eps!r}, got {delta_alpha!r}")

    excess = math.expm1((a - 1.0) * delta_alpha * LN2)
    r = max((excess / eps) ** (1.0 / a), 1.0)
    if r * eps > 1.0 + 1e-12:
        raise InputValidationError(f"r * eps = {r * eps!r} exceeds 1; no valid target for this delta_alpha")

    rest = max(1.0 - r * eps, 0.0) / (1.0 - eps)
    probs = np.where(err, r * q.probs, rest * q.probs)
    p = Dist(q.support, probs)
    realized_loss = float(p.probs[err].sum())
    realized_bits = renyi_divergence(p, q, a).bits
    logger.debug(f"adversarial target: r={r:.6g}, loss {realized_loss:.6g}, D={realized_bits:.6g} bits")
    return AdversarialTarget(
        p=p,
        r_factor=r,
        delta_alpha=delta_alpha,
        realized_divergence_bits=realized_bits,
        realized_loss=realized_loss,
        epsilon=eps,
        alpha=a,
    )


def lemma1_tightness_floor(p: Dist, q: Dist, h: Hypothesis, f: Hypothesis, alpha: AlphaLike) -> float:
    """
    Lower value the zero-one loss of an adversarial target must reach.

    Equals (d eps)^{(alpha-1)/alpha} [1 - d^{-(alpha-1)}]^{1/alpha} with
    d = d_alpha(P||Q) and eps = L_Q(h, f), i.e. the single-source loss bound
    shrunk by the near-tightness factor.
    """
    a = _finite_order_above_one(alpha)
    err = _error_set(q, h, f)
    eps = float(q.probs[err].sum())
    d = d_alpha(p, q, a)
    if math.isinf(d):
        return math.inf
    gamma = (a - 1.0) / a
    shrink = max(1.0 - d ** (-(a - 1.0)), 0.0) ** (1.0 / a)
    return (d * eps) ** gamma * shrink

