"""
Loss-transfer bounds for multi-source adaptation and their verifiers.

Calculators (`*_bound`) assemble a bound from divergences and source losses.
Verifiers (`*_verify`) also build the combined hypothesis the bound talks
about, measure its loss and report whether the inequality held. `run_suite`
drives every verifier over seeded random instances.
"""

from __future__ import annotations

import hashlib
import logging
import math
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp

from combiners import combine_distribution_weighted, combine_r_norm, combine_smoothed
from core_model import (
    Dist,
    Hypothesis,
    InputValidationError,
    LossSpec,
    SimplexWeights,
    Support,
    check_same_support,
    expected_loss,
    expected_power_loss,
    mixture,
    stack_probs,
)
from divergence import (
    AlphaKind,
    AlphaLike,
    AlphaOrder,
    as_alpha,
    d_alpha,
    exp2_bits,
    renyi_divergence_bits,
)
from fitting import (
    DEFAULT_ROBUST_DELTA,
    DEFAULT_ROBUST_ETA,
    DEFAULT_ROBUST_MAX_ITERS,
    fit_mixture,
    robust_fit,
)

logger = logging.getLogger(__name__)

HOLDS_TOL = 1e-9
MIXTURE_DRAWS = 200

TheoremId = Literal[
    "lemma1", "lemma1_tight", "thm2", "thm5", "thm8", "lemma9", "thm10",
    "thm13", "thm14", "cor15", "thm16", "thm17", "lemma11", "lemma12",
]


class BoundReport(BaseModel):
    """One bound evaluated against (optionally) a measured value."""

    model_config = ConfigDict(frozen=True)

    theorem_id: TheoremId
    bound_value: float = Field(ge=0.0)
    measured_value: Optional[float] = None
    margin: Optional[float] = None
    holds: bool
    vacuous: bool = False
    inputs_digest: str
    details: Dict[str, Any] = Field(default_factory=dict)


class NormBoundCert(BaseModel):
    rho: float
    r: float
    holds: bool
    worst_point: str
    worst_ratio: float


def inputs_digest(*parts) -> str:
    """Stable sha256 over distributions, hypotheses, weights and scalars."""
    sha = hashlib.sha256()
    for part in parts:
        if isinstance(part, (list, tuple)):
            sha.update(inputs_digest(*part).encode())
        elif isinstance(part, Dist):
            sha.update(b"dist")
            sha.update("\x1f".join(part.support.points).encode())
            sha.update(part.probs.tobytes())
        elif isinstance(part, Hypothesis):
            sha.update(b"hyp")
            sha.update(part.values.tobytes())
            sha.update(repr(part.range_bound).encode())
        elif isinstance(part, SimplexWeights):
            sha.update(b"weights")
            sha.update(part.weights.tobytes())
        elif isinstance(part, LossSpec):
            sha.update(f"loss:{part.kind.value}:{part.bound_M!r}:{part.beta!r}".encode())
        else:
            sha.update(repr(part).encode())
    return sha.hexdigest()


def make_report(
    theorem_id: str,
    bound: float,
    measured: Optional[float],
    digest: str,
    **details,
) -> BoundReport:
    bound = max(float(bound), 0.0)
    if math.isinf(bound):
        return BoundReport(
            theorem_id=theorem_id, bound_value=bound, measured_value=measured,
            margin=math.inf, holds=True, vacuous=True, inputs_digest=digest, details=details,
        )
    if measured is None:
        return BoundReport(
            theorem_id=theorem_id, bound_value=bound, holds=True, inputs_digest=digest, details=details,
        )
    margin = bound - float(measured)
    report = BoundReport(
        theorem_id=theorem_id, bound_value=bound, measured_value=float(measured),
        margin=margin, holds=margin >= -HOLDS_TOL, inputs_digest=digest, details=details,
    )
    if not report.holds:
        logger.warning(f"{theorem_id} violated: bound {bound:.12g} < measured {measured:.12g}")
    return report


def transfer_bound(d: float, loss_value: float, loss_M: float, alpha: AlphaOrder) -> float:
    """
    (d * L)^{(alpha-1)/alpha} * M^{1/alpha}; d * L at alpha = inf.

    Zero loss gives 0 whatever d is; an infinite d with positive loss gives inf.
    """
    if loss_value <= 0:
        return 0.0
    if math.isinf(d):
        return math.inf
    if alpha.is_infinite:
        return d * loss_value
    a = alpha.value
    return (d * loss_value) ** ((a - 1.0) / a) * loss_M ** (1.0 / a)


def _bound_order(alpha: AlphaLike) -> AlphaOrder:
    order = as_alpha(alpha)
    if not (order.is_infinite or (order.kind is AlphaKind.FINITE and order.value > 1)):
        raise InputValidationError(f"the bound needs alpha > 1 or inf, got {order}")
    return order


def _finite_order(alpha: AlphaLike) -> float:
    order = as_alpha(alpha)
    if order.kind is not AlphaKind.FINITE or order.value <= 1:
        raise InputValidationError(f"the bound needs a finite alpha > 1, got {order}")
    return order.value


def _check_eps(eps: float, loss_M: float) -> None:
    if not 0 <= eps <= loss_M * (1 + 1e-12):
        raise InputValidationError(f"eps must lie in [0, M] = [0, {loss_M}], got {eps!r}")


def _source_epsilon(sources: Sequence[Dist], hyps: Sequence[Hypothesis], fs, loss: LossSpec) -> float:
    """max_i L_{Q_i}(h_i, f_i); fs is one target f or one f_i per source."""
    if len(sources) != len(hyps):
        raise InputValidationError(f"{len(sources)} sources but {len(hyps)} hypotheses")
    if isinstance(fs, Hypothesis):
        fs = [fs] * len(sources)
    return max(expected_loss(q, h, fi, loss) for q, h, fi in zip(sources, hyps, fs))


def _require_convex(loss: LossSpec) -> None:
    if not loss.convex_first:
        raise InputValidationError(f"combined hypotheses need a loss convex in its first argument, got {loss.kind.value}")


def lemma1_bound(
    p: Dist, q: Dist, h: Hypothesis, f: Hypothesis, loss: LossSpec, alpha: AlphaLike, tight: bool = False
) -> BoundReport:
    """
    Single-source loss transfer from Q to P.

    Loose form: (d_alpha(P||Q) L_Q(h, f))^{(alpha-1)/alpha} M^{1/alpha}.
    Tight form: (d_alpha(P||Q) E_Q[L^{alpha/(alpha-1)}])^{(alpha-1)/alpha}.
    At alpha = inf both reduce to d_inf(P||Q) L_Q(h, f).
    """
    order = _bound_order(alpha)
    check_same_support(p, q, h, f)
    measured = expected_loss(p, h, f, loss)
    d = d_alpha(p, q, order)
    if tight and not order.is_infinite:
        a = order.value
        moment = expected_power_loss(q, h, f, loss, a / (a - 1.0))
        bound = 0.0 if moment <= 0 else (math.inf if math.isinf(d) else (d * moment) ** ((a - 1.0) / a))
    else:
        bound = transfer_bound(d, expected_loss(q, h, f, loss), loss.bound_M, order)
    theorem_id = "lemma1_tight" if tight else "lemma1"
    return make_report(theorem_id, bound, measured, inputs_digest(theorem_id, p, q, h, f, loss, str(order)), d=d)


def thm2_bound(
    p: Dist,
    sources: Sequence[Dist],
    eps: float,
    loss_M: float,
    alpha: AlphaLike,
    measured: Optional[float] = None,
) -> BoundReport:
    """
    Bound (d_alpha(P||Q) eps)^{(alpha-1)/alpha} M^{1/alpha} for the best-fit mixture Q.

    Raises:
        InfeasibleFitError: If P charges a point no source charges.
    """
    order = _bound_order(alpha)
    _check_eps(eps, loss_M)
    fit = fit_mixture(p, sources, order)
    d = exp2_bits(fit.objective_bits)
    bound = transfer_bound(d, eps, loss_M, order)
    return make_report(
        "thm2", bound, measured, inputs_digest("thm2", p, list(sources), eps, loss_M, str(order)),
        d=d, weights=fit.weights.tolist(),
    )


def thm2_verify(
    p: Dist,
    sources: Sequence[Dist],
    hyps: Sequence[Hypothesis],
    f: Hypothesis,
    loss: LossSpec,
    alpha: AlphaLike,
    weights: Optional[SimplexWeights] = None,
) -> BoundReport:
    """
    Measure L_P(h_lambda, f) for the distribution-weighted rule and compare with its bound.

    Without weights, lambda is the fitted mixture. With weights (for instance
    the exact weights of a target that is itself a mixture), d_alpha is taken
    at those weights; at alpha = inf the bound is then eps itself.
    """
    order = _bound_order(alpha)
    _require_convex(loss)
    eps = _source_epsilon(sources, hyps, f, loss)
    if weights is None:
        fit = fit_mixture(p, sources, order)
        weights, d = fit.weights, exp2_bits(fit.objective_bits)
    else:
        d = d_alpha(p, mixture(sources, weights), order)
    h_lam = combine_distribution_weighted(sources, hyps, weights)
    measured = expected_loss(p, h_lam, f, loss)
    bound = transfer_bound(d, eps, loss.bound_M, order)
    return make_report(
        "thm2", bound, measured, inputs_digest("thm2", p, list(sources), list(hyps), f, loss, str(order), weights),
        d=d, epsilon=eps, weights=weights.tolist(),
    )


def thm5_bound(
    p: Dist,
    sources: Sequence[Dist],
    eps: float,
    delta: float,
    loss_M: float,
    alpha: AlphaLike,
    measured: Optional[float] = None,
) -> BoundReport:
    """[d_alpha(P||Q)(eps + delta)]^{(alpha-1)/alpha} M^{1/alpha}."""
    if not delta >= 0:
        raise InputValidationError(f"delta must be >= 0, got {delta!r}")
    order = _bound_order(alpha)
    _check_eps(eps, loss_M)
    fit = fit_mixture(p, sources, order)
    d = exp2_bits(fit.objective_bits)
    bound = transfer_bound(d, eps + delta, loss_M, order)
    return make_report(
        "thm5", bound, measured, inputs_digest("thm5", p, list(sources), eps, delta, loss_M, str(order)),
        d=d, weights=fit.weights.tolist(),
    )


def thm5_verify(
    p: Dist,
    sources: Sequence[Dist],
    hyps: Sequence[Hypothesis],
    f: Hypothesis,
    loss: LossSpec,
    alpha: AlphaLike,
    eta: float = DEFAULT_ROBUST_ETA,
    delta: float = DEFAULT_ROBUST_DELTA,
    max_iters: int = DEFAULT_ROBUST_MAX_ITERS,
) -> BoundReport:
    """Robust-fit h_{lambda,eta} without looking at P, then check its loss on P."""
    order = _bound_order(alpha)
    robust = robust_fit(sources, hyps, f, loss, eta=eta, delta=delta, max_iters=max_iters)
    slack = max(delta, robust.delta)
    h = combine_smoothed(sources, hyps, robust.weights, eta)
    measured = expected_loss(p, h, f, loss)
    fit = fit_mixture(p, sources, order)
    d = exp2_bits(fit.objective_bits)
    bound = transfer_bound(d, robust.epsilon + slack, loss.bound_M, order)
    return make_report(
        "thm5", bound, measured,
        inputs_digest("thm5", p, list(sources), list(hyps), f, loss, str(order), eta, delta),
        d=d, epsilon=robust.epsilon, delta=slack, weights=robust.weights.tolist(),
    )


def _norm_columns(Q: np.ndarray, r: float) -> np.ndarray:
    """[sum_i Q_i(x)^r]^{1/r} per column; max_i Q_i(x) for r = inf."""
    if math.isinf(r):
        return Q.max(axis=0)
    norms = np.zeros(Q.shape[1])
    covered = Q.max(axis=0) > 0
    with np.errstate(divide="ignore"):
        log_q = np.log(Q[:, covered])
    norms[covered] = np.exp(logsumexp(r * log_q, axis=0) / r)
    return norms


def check_norm_bounded(
    p: Dist, sources: Sequence[Dist], r: float, rho: Optional[float] = None
) -> NormBoundCert:
    """
    Check P(x) <= rho [sum_i Q_i(x)^r]^{1/r} at every point.

    Args:
        p: Target distribution.
        sources: Source distributions.
        r: Norm order, >= 1 or inf.
        rho: Constant to check; when omitted the smallest valid rho is used.

    Returns:
        NormBoundCert whose worst_ratio is the smallest valid rho (inf when P
        charges a point no source charges).
    """
    if not r >= 1:
        raise InputValidationError(f"r must be >= 1, got {r!r}")
    Q = stack_probs(sources, p.support)
    norms = _norm_columns(Q, r)
    mask = p.support_mask()
    ratios = np.full(p.size, -math.inf)
    with np.errstate(divide="ignore"):
        ratios[mask] = np.where(norms[mask] > 0, p.probs[mask] / np.where(norms[mask] > 0, norms[mask], 1.0), math.inf)
    j = int(np.argmax(ratios))
    worst = float(ratios[j])
    if rho is None:
        rho, holds = worst, math.isfinite(worst)
    else:
        if not rho > 0:
            raise InputValidationError(f"rho must be > 0, got {rho!r}")
        holds = worst <= rho
    return NormBoundCert(rho=rho, r=r, holds=holds, worst_point=p.support.points[j], worst_ratio=worst)


def _finite_rho(p: Dist, sources: Sequence[Dist], r: float) -> float:
    cert = check_norm_bounded(p, sources, r)
    if math.isinf(cert.rho):
        raise InputValidationError(f"target is not norm-bounded at order {r}: point {cert.worst_point!r} is uncovered")
    return cert.rho


def thm8_verify(
    p: Dist,
    sources: Sequence[Dist],
    hyps: Sequence[Hypothesis],
    f: Hypothesis,
    loss: LossSpec,
    r: float,
) -> BoundReport:
    """L_P(h_{r-norm}, f) <= rho k eps, with rho the smallest (rho, r) norm bound."""
    if not math.isinf(r):
        _require_convex(loss)
    rho = _finite_rho(p, sources, r)
    eps = _source_epsilon(sources, hyps, f, loss)
    h = combine_r_norm(sources, hyps, r)
    measured = expected_loss(p, h, f, loss)
    bound = rho * len(sources) * eps
    return make_report(
        "thm8", bound, measured, inputs_digest("thm8", p, list(sources), list(hyps), f, loss, r),
        rho=rho, epsilon=eps,
    )


def _check_lemma9_order(r: float) -> None:
    if not r >= 2:
        raise InputValidationError(f"r must be >= 2, got {r!r}")


def lemma9_verify(p: Dist, sources: Sequence[Dist], r: float) -> BoundReport:
    """D_r(P||Q_u) <= log2(k rho) for the uniform mixture Q_u and rho at order r - 1."""
    _check_lemma9_order(r)
    k = len(sources)
    rho = _finite_rho(p, sources, r - 1.0)
    q_u = mixture(sources, SimplexWeights.uniform(k))
    measured = renyi_divergence_bits(p, q_u, r)
    bound = max(math.log2(k * rho), 0.0)
    return make_report("lemma9", bound, measured, inputs_digest("lemma9", p, list(sources), r), rho=rho)


def thm10_bound(
    p: Dist,
    sources: Sequence[Dist],
    h: Hypothesis,
    f: Hypothesis,
    loss: LossSpec,
    r: float,
) -> BoundReport:
    """L_P(h, f) <= [rho sum_i L_{Q_i}(h, f)]^{(r-1)/r} M^{1/r}, rho at order r - 1."""
    _check_lemma9_order(r)
    rho = _finite_rho(p, sources, r - 1.0)
    total = sum(expected_loss(q, h, f, loss) for q in sources)
    measured = expected_loss(p, h, f, loss)
    bound = transfer_bound(rho, total, loss.bound_M, AlphaOrder.of(r))
    return make_report(
        "thm10", bound, measured, inputs_digest("thm10", p, list(sources), h, f, loss, r), rho=rho,
    )


def lemma11_verify(
    sources: Sequence[Dist], approx: Sequence[Dist], mu: SimplexWeights, alpha: AlphaLike
) -> BoundReport:
    """D_alpha(Q_mu||Qhat_mu) <= max_i D_alpha(Q_i||Qhat_i)."""
    order = _bound_order(alpha)
    if len(sources) != len(approx):
        raise InputValidationError(f"{len(sources)} sources but {len(approx)} approximations")
    check_same_support(*sources, *approx)
    measured = renyi_divergence_bits(mixture(sources, mu), mixture(approx, mu), order)
    bound = max(renyi_divergence_bits(q, qh, order) for q, qh in zip(sources, approx))
    return make_report("lemma11", bound, measured, inputs_digest("lemma11", list(sources), list(approx), mu, str(order)))


BOUND_FORMS = ("printed", "derived")


def _check_form(form: str) -> None:
    if form not in BOUND_FORMS:
        raise InputValidationError(f"form must be 'printed' or 'derived', got {form!r}")


def lemma12_factor(a: float) -> float:
    """Weight (2a-1)/(2(a-1)) that Hölder's inequality leaves on D_{2a}(P||Q); always > 1."""
    return (2.0 * a - 1.0) / (2.0 * (a - 1.0))


def lemma12_verify(p: Dist, q: Dist, q_hat: Dist, alpha: AlphaLike, form: str = "derived") -> BoundReport:
    """
    D_alpha(P||Qhat) <= c D_{2 alpha}(P||Q) + D_{2 alpha - 1}(Q||Qhat).

    form="derived" takes c = lemma12_factor(alpha). form="printed" takes
    c = 1, which does not hold in general.
    """
    _check_form(form)
    a = _finite_order(alpha)
    c = lemma12_factor(a) if form == "derived" else 1.0
    measured = renyi_divergence_bits(p, q_hat, a)
    bound = c * renyi_divergence_bits(p, q, 2.0 * a) + renyi_divergence_bits(q, q_hat, 2.0 * a - 1.0)
    return make_report(
        "lemma12", bound, measured, inputs_digest("lemma12", p, q, q_hat, a, form), form=form, factor=c,
    )


def _approximation_factors(sources: Sequence[Dist], approx: Sequence[Dist], a: float):
    """(max_i d_{2a-1}(Q_i||Qhat_i), max_i d_a(Qhat_i||Q_i))."""
    if len(sources) != len(approx):
        raise InputValidationError(f"{len(sources)} sources but {len(approx)} approximations")
    check_same_support(*sources, *approx)
    forward = max(d_alpha(q, qh, 2.0 * a - 1.0) for q, qh in zip(sources, approx))
    backward = max(d_alpha(qh, q, a) for q, qh in zip(sources, approx))
    return forward, backward


def thm13_bound(
    p: Dist,
    sources: Sequence[Dist],
    approx: Sequence[Dist],
    eps: float,
    loss_M: float,
    alpha: AlphaLike,
    measured: Optional[float] = None,
    form: str = "derived",
) -> BoundReport:
    """
    Bound for the rule fitted on approximate source distributions.

    With gamma = (alpha-1)/alpha the printed form is
    eps^g d_{2a}(P||Q)^g M^{(1+g)/a} max_i d_{2a-1}(Q_i||Qhat_i)^g max_i d_a(Qhat_i||Q_i)^g;
    form="derived" raises eps and the last factor to gamma squared instead,
    and d_{2a}(P||Q) to c gamma with c = lemma12_factor(alpha).
    d_{2a}(P||Q) is taken at the mixture minimizing D_{2a}(P||Q_lambda).
    """
    _check_form(form)
    a = _finite_order(alpha)
    _check_eps(eps, loss_M)
    gamma = (a - 1.0) / a
    forward, backward = _approximation_factors(sources, approx, a)
    d_target = exp2_bits(fit_mixture(p, sources, 2.0 * a).objective_bits)
    outer = gamma if form == "printed" else gamma * gamma
    inner = gamma if form == "printed" else lemma12_factor(a) * gamma
    if eps <= 0:
        bound = 0.0
    elif any(math.isinf(v) for v in (forward, backward, d_target)):
        bound = math.inf
    else:
        bound = (
            eps ** outer
            * d_target ** inner
            * loss_M ** ((1.0 + gamma) / a)
            * forward ** gamma
            * backward ** outer
        )
    return make_report(
        "thm13", bound, measured,
        inputs_digest("thm13", p, list(sources), list(approx), eps, loss_M, a, form),
        form=form, d_target=d_target, forward=forward, backward=backward,
    )


def thm13_verify(
    p: Dist,
    sources: Sequence[Dist],
    approx: Sequence[Dist],
    hyps: Sequence[Hypothesis],
    f: Hypothesis,
    loss: LossSpec,
    alpha: AlphaLike,
    form: str = "derived",
) -> BoundReport:
    """Fit lambda against the approximations, combine with them and measure L_P(h, f)."""
    a = _finite_order(alpha)
    _require_convex(loss)
    eps = _source_epsilon(sources, hyps, f, loss)
    fitted = fit_mixture(p, approx, a)
    h = combine_distribution_weighted(approx, hyps, fitted.weights)
    measured = expected_loss(p, h, f, loss)
    return thm13_bound(p, sources, approx, eps, loss.bound_M, a, measured=measured, form=form)


def _approx_source_bound(backward: float, eps: float, loss_M: float, a: float) -> float:
    """[max_i d_a(Qhat_i||Q_i) eps]^{(a-1)/a} M^{1/a}, the source loss on the approximations."""
    return transfer_bound(backward, eps, loss_M, AlphaOrder.of(a))


def thm14_bound(
    sources: Sequence[Dist],
    approx: Sequence[Dist],
    eps: float,
    loss_M: float,
    alpha: AlphaLike,
    delta: float,
    measured: Optional[float] = None,
) -> BoundReport:
    """[max_i d_alpha(Qhat_i||Q_i) eps]^{(alpha-1)/alpha} M^{1/alpha} + delta."""
    a = _finite_order(alpha)
    _check_eps(eps, loss_M)
    if not delta >= 0:
        raise InputValidationError(f"delta must be >= 0, got {delta!r}")
    _, backward = _approximation_factors(sources, approx, a)
    bound = _approx_source_bound(backward, eps, loss_M, a) + delta
    return make_report(
        "thm14", bound, measured,
        inputs_digest("thm14", list(sources), list(approx), eps, loss_M, a, delta),
        backward=backward,
    )


def thm14_verify(
    sources: Sequence[Dist],
    approx: Sequence[Dist],
    hyps: Sequence[Hypothesis],
    f: Hypothesis,
    loss: LossSpec,
    alpha: AlphaLike,
    eta: float = DEFAULT_ROBUST_ETA,
    delta: float = DEFAULT_ROBUST_DELTA,
    seed: int = 0,
    max_iters: int = DEFAULT_ROBUST_MAX_ITERS,
) -> BoundReport:
    """
    Robust-fit on the approximations and check the loss under their mixtures.

    The measured value is the largest L_{Qhat_mu}(h_{lambda,eta}, f) over the
    vertices and 200 random mixtures mu drawn with the given seed.
    """
    a = _finite_order(alpha)
    eps = _source_epsilon(sources, hyps, f, loss)
    robust = robust_fit(approx, hyps, f, loss, eta=eta, delta=delta, max_iters=max_iters)
    slack = max(delta, robust.delta)
    h = combine_smoothed(approx, hyps, robust.weights, eta)

    k = len(approx)
    rng = np.random.default_rng(seed)
    mus = np.vstack([np.eye(k), rng.dirichlet(np.ones(k), size=MIXTURE_DRAWS)])
    per_source = np.array([expected_loss(qh, h, f, loss) for qh in approx])
    measured = float((mus @ per_source).max())
    return thm14_bound(sources, approx, eps, loss.bound_M, a, slack, measured=measured)


def cor15_bound(
    p: Dist,
    sources: Sequence[Dist],
    approx: Sequence[Dist],
    eps: float,
    loss_M: float,
    alpha: AlphaLike,
    delta: float,
    measured: Optional[float] = None,
) -> BoundReport:
    """
    [d (epshat + delta)]^{(a-1)/a} M^{1/a} with
    epshat = [max_i d_a(Qhat_i||Q_i) eps]^{(a-1)/a} M^{1/a} and
    d = d_{2a}(P||Q)^c max_i d_{2a-1}(Q_i||Qhat_i), c = lemma12_factor(alpha).
    """
    a = _finite_order(alpha)
    _check_eps(eps, loss_M)
    if not delta >= 0:
        raise InputValidationError(f"delta must be >= 0, got {delta!r}")
    forward, backward = _approximation_factors(sources, approx, a)
    target_bits = fit_mixture(p, sources, 2.0 * a).objective_bits
    d_target = exp2_bits(target_bits)
    eps_hat = _approx_source_bound(backward, eps, loss_M, a)
    # decomposition of d_a(P||Qhat) into the target and approximation terms
    d_hat = exp2_bits(lemma12_factor(a) * target_bits) * forward
    bound = transfer_bound(d_hat, eps_hat + delta, loss_M, AlphaOrder.of(a))
    return make_report(
        "cor15", bound, measured,
        inputs_digest("cor15", p, list(sources), list(approx), eps, loss_M, a, delta),
        d_target=d_target, forward=forward, backward=backward, eps_hat=eps_hat,
    )


def cor15_verify(
    p: Dist,
    sources: Sequence[Dist],
    approx: Sequence[Dist],
    hyps: Sequence[Hypothesis],
    f: Hypothesis,
    loss: LossSpec,
    alpha: AlphaLike,
    eta: float = DEFAULT_ROBUST_ETA,
    delta: float = DEFAULT_ROBUST_DELTA,
    max_iters: int = DEFAULT_ROBUST_MAX_ITERS,
) -> BoundReport:
    a = _finite_order(alpha)
    eps = _source_epsilon(sources, hyps, f, loss)
    robust = robust_fit(approx, hyps, f, loss, eta=eta, delta=delta, max_iters=max_iters)
    slack = max(delta, robust.delta)
    h = combine_smoothed(approx, hyps, robust.weights, eta)
    measured = expected_loss(p, h, f, loss)
    return cor15_bound(p, sources, approx, eps, loss.bound_M, a, slack, measured=measured)


def _multi_function_parts(p, sources, hyps, source_fs, f, loss, lam, alpha):
    order = _bound_order(alpha)
    if len(source_fs) != len(sources):
        raise InputValidationError(f"{len(sources)} sources but {len(source_fs)} source labeling functions")
    if not loss.convex_both:
        raise InputValidationError(f"{loss.kind.value} loss is not jointly convex")
    check_same_support(p, *sources, *hyps, *source_fs, f)
    eps = _source_epsilon(sources, hyps, source_fs, loss)
    delta = max(expected_loss(p, fi, f, loss) for fi in source_fs)
    d = d_alpha(p, mixture(sources, lam), order)
    h_lam = combine_distribution_weighted(sources, hyps, lam)
    measured = expected_loss(p, h_lam, f, loss)
    first = transfer_bound(d, eps, loss.bound_M, order)
    digest_parts = (p, list(sources), list(hyps), list(source_fs), f, loss, lam, str(order))
    return first, delta, measured, dict(d=d, epsilon=eps, delta=delta), digest_parts


def thm16_verify(
    p: Dist,
    sources: Sequence[Dist],
    hyps: Sequence[Hypothesis],
    source_fs: Sequence[Hypothesis],
    f: Hypothesis,
    loss: LossSpec,
    lam: SimplexWeights,
    alpha: AlphaLike,
) -> BoundReport:
    """
    Sources labeled by their own functions f_i, target labeled by f.

    L_P(h_lambda, f) <= [d_alpha(P||Q_lambda) eps]^{(alpha-1)/alpha} M^{1/alpha} + k delta,
    with eps = max_i L_{Q_i}(h_i, f_i) and delta = max_i L_P(f_i, f), for
    any lambda and a jointly convex loss obeying the triangle inequality.
    """
    if loss.beta != 1:
        raise InputValidationError(f"{loss.kind.value} loss does not obey the triangle inequality (beta = {loss.beta})")
    first, delta, measured, details, parts = _multi_function_parts(p, sources, hyps, source_fs, f, loss, lam, alpha)
    bound = first + len(sources) * delta
    return make_report("thm16", bound, measured, inputs_digest("thm16", *parts), **details)


def thm17_verify(
    p: Dist,
    sources: Sequence[Dist],
    hyps: Sequence[Hypothesis],
    source_fs: Sequence[Hypothesis],
    f: Hypothesis,
    loss: LossSpec,
    lam: SimplexWeights,
    alpha: AlphaLike,
) -> BoundReport:
    """As thm16_verify for losses with a beta-relaxed triangle inequality; both terms scale by beta."""
    first, delta, measured, details, parts = _multi_function_parts(p, sources, hyps, source_fs, f, loss, lam, alpha)
    bound = loss.beta * first + loss.beta * len(sources) * delta
    return make_report("thm17", bound, measured, inputs_digest("thm17", *parts), beta=loss.beta, **details)


# Randomized suites

APPROX_NOISE = 0.3
SUITE_ROBUST_ITERS = 2000


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator per (seed, trial), so trials can run in any order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def random_dist(rng: np.random.Generator, support: Support) -> Dist:
    probs = rng.dirichlet(np.ones(support.size))
    probs = np.clip(probs, 1e-12, None)
    return Dist(support, probs / probs.sum())


def perturbed_dist(rng: np.random.Generator, q: Dist, noise: float = APPROX_NOISE) -> Dist:
    """Multiplicative lognormal noise on every probability, renormalized."""
    probs = q.probs * np.exp(noise * rng.standard_normal(q.size))
    return Dist(q.support, probs / probs.sum())


def random_boolean(rng: np.random.Generator, support: Support) -> Hypothesis:
    return Hypothesis(support, rng.integers(0, 2, support.size).astype(float))


def random_real(rng: np.random.Generator, support: Support) -> Hypothesis:
    return Hypothesis(support, rng.random(support.size))


def _instance(rng: np.random.Generator, max_n: int = 50, max_k: int = 4, min_k: int = 1):
    n = int(rng.integers(2, max_n + 1))
    k = int(rng.integers(min_k, max_k + 1))
    support = Support.of_size(n)
    sources = [random_dist(rng, support) for _ in range(k)]
    return support, sources


def _pick(options: Sequence, trial: int, alpha: Optional[float]):
    return alpha if alpha is not None else options[trial % len(options)]


def _trial_lemma1(trial, rng, alpha):
    support, (q,) = _instance(rng, max_k=1)
    p = random_dist(rng, support)
    h, f = random_boolean(rng, support), random_boolean(rng, support)
    a = _pick([1.5, 2.0, 3.0, math.inf], trial, alpha)
    loss = LossSpec.zero_one()
    return [lemma1_bound(p, q, h, f, loss, a), lemma1_bound(p, q, h, f, loss, a, tight=True)]


def _trial_lemma9(trial, rng, alpha):
    support, sources = _instance(rng)
    p = random_dist(rng, support)
    r = _pick([2.0, 3.0], trial, alpha)
    return [lemma9_verify(p, sources, r)]


def _trial_lemma11(trial, rng, alpha):
    support, sources = _instance(rng)
    approx = [perturbed_dist(rng, q) for q in sources]
    mu = SimplexWeights.from_unnormalized(rng.dirichlet(np.ones(len(sources))))
    return [lemma11_verify(sources, approx, mu, _pick([1.5, 2.0, 3.0], trial, alpha))]


def _trial_lemma12(trial, rng, alpha):
    support, (q,) = _instance(rng, max_k=1)
    p = random_dist(rng, support)
    return [lemma12_verify(p, q, perturbed_dist(rng, q), _pick([2.0], trial, alpha))]


def _trial_thm2(trial, rng, alpha):
    support, sources = _instance(rng, max_n=30, max_k=3, min_k=2)
    hyps = [random_real(rng, support) for _ in sources]
    f = random_real(rng, support)
    loss = LossSpec.absolute() if trial % 2 == 0 else LossSpec.squared()
    if trial % 2 == 1:
        # target inside the mixture class, checked with its own weights
        mu = SimplexWeights.from_unnormalized(rng.dirichlet(np.ones(len(sources))))
        p = mixture(sources, mu)
        return [thm2_verify(p, sources, hyps, f, loss, _pick([math.inf], trial, alpha), weights=mu)]
    p = random_dist(rng, support)
    return [thm2_verify(p, sources, hyps, f, loss, _pick([2.0, 3.0], trial // 2, alpha))]


def _trial_thm5(trial, rng, alpha):
    support, sources = _instance(rng, max_n=12, max_k=3, min_k=2)
    p = random_dist(rng, support)
    hyps = [random_real(rng, support) for _ in sources]
    return [thm5_verify(p, sources, hyps, random_real(rng, support), LossSpec.absolute(), _pick([2.0, math.inf], trial, alpha), max_iters=SUITE_ROBUST_ITERS)]


def _trial_thm8(trial, rng, alpha):
    support, sources = _instance(rng)
    p = random_dist(rng, support)
    hyps = [random_real(rng, support) for _ in sources]
    r = _pick([1.0, 2.0, math.inf], trial, alpha)
    return [thm8_verify(p, sources, hyps, random_real(rng, support), LossSpec.absolute(), r)]


def _trial_thm10(trial, rng, alpha):
    support, sources = _instance(rng)
    p = random_dist(rng, support)
    r = _pick([2.0, 3.0], trial, alpha)
    return [thm10_bound(p, sources, random_real(rng, support), random_real(rng, support), LossSpec.absolute(), r)]


def _approx_instance(rng):
    support, sources = _instance(rng, max_n=20, max_k=3, min_k=2)
    p = random_dist(rng, support)
    approx = [perturbed_dist(rng, q) for q in sources]
    hyps = [random_real(rng, support) for _ in sources]
    return support, p, sources, approx, hyps, random_real(rng, support)


def _trial_thm13(trial, rng, alpha):
    support, p, sources, approx, hyps, f = _approx_instance(rng)
    return [thm13_verify(p, sources, approx, hyps, f, LossSpec.absolute(), _pick([2.0], trial, alpha))]


def _trial_thm14(trial, rng, alpha):
    support, p, sources, approx, hyps, f = _approx_instance(rng)
    seed = int(rng.integers(0, 2**31 - 1))
    return [thm14_verify(sources, approx, hyps, f, LossSpec.absolute(), _pick([2.0], trial, alpha), seed=seed, max_iters=SUITE_ROBUST_ITERS)]


def _trial_cor15(trial, rng, alpha):
    support, p, sources, approx, hyps, f = _approx_instance(rng)
    return [cor15_verify(p, sources, approx, hyps, f, LossSpec.absolute(), _pick([2.0], trial, alpha), max_iters=SUITE_ROBUST_ITERS)]


def _multi_function_instance(rng):
    support, sources = _instance(rng, max_n=30, max_k=3, min_k=2)
    p = random_dist(rng, support)
    f = random_real(rng, support)
    source_fs = [Hypothesis(support, np.clip(f.values + 0.2 * rng.standard_normal(support.size), 0.0, 1.0)) for _ in sources]
    hyps = [Hypothesis(support, np.clip(fi.values + 0.2 * rng.standard_normal(support.size), 0.0, 1.0)) for fi in source_fs]
    lam = SimplexWeights.from_unnormalized(rng.dirichlet(np.ones(len(sources))))
    return p, sources, hyps, source_fs, f, lam


def _trial_thm16(trial, rng, alpha):
    p, sources, hyps, source_fs, f, lam = _multi_function_instance(rng)
    return [thm16_verify(p, sources, hyps, source_fs, f, LossSpec.absolute(), lam, _pick([2.0], trial, alpha))]


def _trial_thm17(trial, rng, alpha):
    p, sources, hyps, source_fs, f, lam = _multi_function_instance(rng)
    return [thm17_verify(p, sources, hyps, source_fs, f, LossSpec.squared(), lam, _pick([2.0], trial, alpha))]


SUITES: Dict[str, Callable[[int, np.random.Generator, Optional[float]], List[BoundReport]]] = {
    "lemma1": _trial_lemma1,
    "lemma9": _trial_lemma9,
    "lemma11": _trial_lemma11,
    "lemma12": _trial_lemma12,
    "thm2": _trial_thm2,
    "thm5": _trial_thm5,
    "thm8": _trial_thm8,
    "thm10": _trial_thm10,
    "thm13": _trial_thm13,
    "thm14": _trial_thm14,
    "cor15": _trial_cor15,
    "thm16": _trial_thm16,
    "thm17": _trial_thm17,
}


def run_suite(name: str, trials: int, seed: int, alpha: Optional[float] = None) -> List[BoundReport]:
    """
    Run one verifier over `trials` random instances.

    Args:
        name: Suite name, a key of SUITES.
        trials: Number of random instances.
        seed: Base seed; trial t draws from its own substream (seed, t).
        alpha: Fixed order (or r for the norm-bounded suites); by default
            each suite cycles through its usual orders.

    Returns:
        All reports in trial order.
    """
    if name not in SUITES:
        raise InputValidationError(f"unknown suite {name!r}; choose from {', '.join(sorted(SUITES))}")
    if trials < 1:
        raise InputValidationError(f"trials must be >= 1, got {trials}")
    trial_fn = SUITES[name]
    reports: List[BoundReport] = []
    for trial in range(trials):
        reports.extend(trial_fn(trial, trial_rng(seed, trial), alpha))
    violations = sum(not r.holds for r in reports)
    logger.info(f"suite {name}: {trials} trials, {len(reports)} reports, {violations} violations")
    return reports


def suite_summary(name: str, trials: int, reports: Sequence[BoundReport]) -> Dict[str, Any]:
    return {"suite": name, "trials": trials, "violations": sum(not r.holds for r in reports)}
