"""
Desk-scale experiments on a discretized plane.

Four isotropic Gaussians are tabulated on a square grid; two source
distributions and one target are uniform mixtures of them, and the target
labeling is the sign of x1*x2. Base hypotheses are least-squares linear fits
trained on samples from each source.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import IO, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.stats import multivariate_normal, spearmanr

from bounds import BoundReport, thm16_verify, thm17_verify, transfer_bound
from combiners import combine_distribution_weighted
from core_model import (
    Dist,
    Hypothesis,
    InputValidationError,
    LossSpec,
    SimplexWeights,
    Support,
    expected_loss,
    mixture,
)
from divergence import AlphaOrder, exp2_bits, renyi_divergence_bits
from fitting import fit_mixture

logger = logging.getLogger(__name__)

DEFAULT_CENTERS = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
RIDGE = 1e-8
CSV_HEADER = ["lambda", "mse", "d2_bits", "thm2_bound"]

# substreams of the configured seed
TRAIN_STREAMS = (1, 2)
TEST_STREAM = 3
LABEL_NOISE_STREAM = 10
APPROX_STREAM = 20

StreamKey = Union[int, Tuple[int, ...]]


class GaussianGridConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    centers: List[Tuple[float, float]] = Field(default_factory=lambda: list(DEFAULT_CENTERS))
    variance: float = Field(1.0, gt=0)
    grid_extent: float = Field(4.0, gt=0)
    grid_cells: int = Field(64, ge=8)
    n_train: int = Field(5000, ge=3)
    n_test: int = Field(5000, ge=1)
    seed: int = 7
    lambda_steps: int = Field(101, ge=3)
    alpha: float = Field(2.0, gt=1)

    @field_validator("centers")
    @classmethod
    def _four_centers(cls, centers):
        if len(centers) != 4:
            raise ValueError(f"expected 4 Gaussian centers, got {len(centers)}")
        return centers

    @field_validator("grid_cells")
    @classmethod
    def _even_grid(cls, cells):
        # cell centers of an even grid never lie on the axes
        if cells % 2:
            raise ValueError(f"grid_cells must be even, got {cells}")
        return cells


class ExperimentRow(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(serialization_alias="lambda")
    mse: float
    divergence_bits: float
    thm2_bound: float


class ExperimentResult(BaseModel):
    rows: List[ExperimentRow]
    argmin_mse: float
    argmin_div: float
    rank_correlation: float
    min_divergence_bits: float
    source_epsilon: float


class ApproximationRow(BaseModel):
    n_train: int
    median_max_divergence_bits: float
    max_divergence_bits: List[float]


class ApproximationResult(BaseModel):
    alpha: float
    smoothing: float
    rows: List[ApproximationRow]


def build_grid_support(cfg: GaussianGridConfig) -> Support:
    """grid_cells x grid_cells cell centers over [-extent, extent]^2, x1-major."""
    width = 2.0 * cfg.grid_extent / cfg.grid_cells
    axis = -cfg.grid_extent + (np.arange(cfg.grid_cells) + 0.5) * width
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    coords = np.column_stack([x1.ravel(), x2.ravel()])
    if np.any(coords == 0.0):
        raise InputValidationError("a grid cell center lies on an axis")
    points = tuple(f"c{i}_{j}" for i in range(cfg.grid_cells) for j in range(cfg.grid_cells))
    return Support(points, coords)


def discretize_gaussian_mixture(
    components: Sequence[Tuple[Sequence[float], float]],
    cfg: GaussianGridConfig,
    support: Optional[Support] = None,
) -> Dist:
    """
    Tabulate a mixture of isotropic Gaussians at the grid cell centers and normalize.

    Args:
        components: (center, weight) pairs; weights must lie on the simplex.
        cfg: Grid and variance settings.
        support: Grid support to reuse; built from cfg when omitted.

    Returns:
        The normalized Dist over the grid.
    """
    if support is None:
        support = build_grid_support(cfg)
    if support.coords is None:
        raise InputValidationError("the support has no coordinates")
    weights = SimplexWeights([w for _, w in components])
    density = np.zeros(support.size)
    for (center, _), w in zip(components, weights.weights):
        if w > 0:
            density += w * multivariate_normal(mean=np.asarray(center, dtype=float), cov=cfg.variance).pdf(support.coords)
    total = density.sum()
    if not total > 0:
        raise InputValidationError("the mixture density vanishes on the whole grid")
    return Dist(support, density / total)


def quadrant_labels(support: Support) -> Hypothesis:
    """f(x) = 1 where x1 * x2 > 0 and 0 elsewhere."""
    if support.coords is None:
        raise InputValidationError("the support has no coordinates")
    product = support.coords[:, 0] * support.coords[:, 1]
    return Hypothesis(support, (product > 0).astype(float))


def stream_generator(seed: int, stream: StreamKey) -> np.random.Generator:
    """Counter-based Philox generator for substream `stream` of `seed`."""
    key = stream if isinstance(stream, tuple) else (stream,)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def sample_indices(d: Dist, n: int, seed: int, stream: StreamKey = 0) -> np.ndarray:
    """n inverse-CDF draws of support indices; deterministic in (seed, stream)."""
    if n < 1:
        raise InputValidationError(f"n must be >= 1, got {n}")
    cdf = np.cumsum(d.probs)
    cdf /= cdf[-1]
    u = stream_generator(seed, stream).random(n)
    return np.minimum(np.searchsorted(cdf, u, side="right"), d.size - 1)


def sample_dist(d: Dist, n: int, seed: int, stream: StreamKey = 0) -> List[str]:
    return [d.support.points[i] for i in sample_indices(d, n, seed, stream)]


def _as_indices(samples, support: Support) -> np.ndarray:
    if isinstance(samples, np.ndarray) and samples.dtype.kind in "iu":
        return samples
    return np.array([support.index_of(s) for s in samples], dtype=int)


def empirical_dist(samples, support: Support, smoothing: float = 0.0) -> Dist:
    """
    Add-`smoothing` estimate (count(x) + s) / (n + s |support|).

    Args:
        samples: Point ids, or an integer array of support indices.
        support: Support the samples come from.
        smoothing: Pseudo-count per point, >= 0.
    """
    if not smoothing >= 0:
        raise InputValidationError(f"smoothing must be >= 0, got {smoothing!r}")
    idx = _as_indices(samples, support)
    if idx.size == 0:
        raise InputValidationError("cannot estimate a distribution from zero samples")
    counts = np.bincount(idx, minlength=support.size).astype(float)
    return Dist(support, (counts + smoothing) / (idx.size + smoothing * support.size))


def fit_linear(coords: np.ndarray, labels: np.ndarray, ridge: float = RIDGE) -> Tuple[np.ndarray, float]:
    """Least-squares weights and intercept, with a small ridge term for degenerate designs."""
    X = np.column_stack([coords, np.ones(coords.shape[0])])
    gram = X.T @ X + ridge * np.eye(X.shape[1])
    beta = np.linalg.solve(gram, X.T @ labels)
    return beta[:-1], float(beta[-1])


def train_least_squares(samples, labels, support: Support, range_bound: float = 1.0) -> Hypothesis:
    """
    Fit w.x + b to the labels and tabulate clamp(w.x + b, 0, B) over the support.

    Raises:
        InputValidationError: With fewer than 3 samples, labels outside
            [0, B] or a support without coordinates.
    """
    if support.coords is None:
        raise InputValidationError("least-squares training needs a support with coordinates")
    idx = _as_indices(samples, support)
    labels = np.asarray(labels, dtype=float)
    if idx.size < 3:
        raise InputValidationError(f"need at least 3 samples, got {idx.size}")
    if labels.shape != idx.shape:
        raise InputValidationError(f"{labels.size} labels for {idx.size} samples")
    if np.any(labels < 0) or np.any(labels > range_bound):
        raise InputValidationError(f"labels must lie in [0, {range_bound}]")
    w, b = fit_linear(support.coords[idx], labels)
    logger.debug(f"least-squares fit: w={np.round(w, 4).tolist()}, b={b:.4f}")
    return Hypothesis(support, np.clip(support.coords @ w + b, 0.0, range_bound), range_bound)


def _task_distributions(cfg: GaussianGridConfig, support: Support) -> Tuple[Dist, Dist, Dist]:
    g1, g2, g3, g4 = cfg.centers
    third, quarter = 1.0 / 3.0, 0.25
    q1 = discretize_gaussian_mixture([(g1, third), (g2, third), (g3, third)], cfg, support)
    q2 = discretize_gaussian_mixture([(g1, third), (g3, third), (g4, third)], cfg, support)
    p = discretize_gaussian_mixture([(g, quarter) for g in (g1, g2, g3, g4)], cfg, support)
    return q1, q2, p


def _train_sources(cfg: GaussianGridConfig, sources: Sequence[Dist], labelings: Sequence[Hypothesis]) -> List[Hypothesis]:
    hyps = []
    for stream, q, fi in zip(TRAIN_STREAMS, sources, labelings):
        idx = sample_indices(q, cfg.n_train, cfg.seed, stream)
        hyps.append(train_least_squares(idx, fi.values[idx], q.support))
    return hyps


def _map_rows(fn, items, workers: int) -> list:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def run_gaussian_experiment(cfg: GaussianGridConfig, workers: int = 1) -> ExperimentResult:
    """
    MSE of the distribution-weighted rule versus divergence, across lambda.

    Every row uses the same test sample from P, so rows depend on lambda
    only and the result is the same for any number of workers.
    """
    support = build_grid_support(cfg)
    q1, q2, p = _task_distributions(cfg, support)
    f = quadrant_labels(support)
    sources = [q1, q2]
    hyps = _train_sources(cfg, sources, [f, f])
    loss = LossSpec.squared()
    eps = max(expected_loss(q, h, f, loss) for q, h in zip(sources, hyps))
    logger.info(f"trained base hypotheses on {cfg.n_train} samples each; source epsilon {eps:.6g}")

    test_idx = sample_indices(p, cfg.n_test, cfg.seed, TEST_STREAM)
    y_test = f.values[test_idx]
    order = AlphaOrder.of(cfg.alpha)
    lambdas = np.linspace(0.0, 1.0, cfg.lambda_steps)

    def row(lam: float) -> ExperimentRow:
        z = SimplexWeights([lam, 1.0 - lam])
        h = combine_distribution_weighted(sources, hyps, z)
        mse = float(np.mean((h.values[test_idx] - y_test) ** 2))
        bits = renyi_divergence_bits(p, mixture(sources, z), order)
        bound = transfer_bound(exp2_bits(bits), eps, loss.bound_M, order)
        return ExperimentRow(lam=float(lam), mse=mse, divergence_bits=bits, thm2_bound=bound)

    rows = _map_rows(row, lambdas, workers)
    mse = np.array([r.mse for r in rows])
    div = np.array([r.divergence_bits for r in rows])
    rank = float(spearmanr(mse, div)[0])
    fit = fit_mixture(p, sources, order)
    result = ExperimentResult(
        rows=rows,
        argmin_mse=float(lambdas[int(np.argmin(mse))]),
        argmin_div=float(lambdas[int(np.argmin(div))]),
        rank_correlation=rank,
        min_divergence_bits=fit.objective_bits,
        source_epsilon=eps,
    )
    logger.info(
        f"argmin MSE at lambda={result.argmin_mse:.3f}, argmin divergence at {result.argmin_div:.3f}, "
        f"Spearman {rank:.4f}"
    )
    return result


def write_csv(result: ExperimentResult, out: Union[str, Path, IO[str]]) -> None:
    """Write one row per lambda with 12 significant digits and LF line endings."""
    if isinstance(out, (str, Path)):
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            write_csv(result, fh)
        logger.info(f"wrote {len(result.rows)} rows to {path}")
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in result.rows:
        writer.writerow(["%.12g" % v for v in (r.lam, r.mse, r.divergence_bits, r.thm2_bound)])


def perturbed_labeling(
    f: Hypothesis, p: Dist, q: Dist, perturbation: float, seed: int, stream: StreamKey
) -> Hypothesis:
    """
    Source labeling f_i close to f under P but not necessarily under Q_i.

    Labels on the top-decile P cells flip independently with probability
    `perturbation`; for a positive perturbation the labels on the
    bottom-decile P cells that Q_i charges more than P are inverted too.
    """
    values = f.values.copy()
    top = p.probs >= np.quantile(p.probs, 0.9)
    flips = top & (stream_generator(seed, stream).random(p.size) < perturbation)
    if perturbation > 0:
        flips |= (p.probs <= np.quantile(p.probs, 0.1)) & (q.probs > p.probs)
    values[flips] = 1.0 - values[flips]
    return Hypothesis(f.support, values, f.range_bound)


def run_multi_function_experiment(
    cfg: GaussianGridConfig, perturbation: float, workers: int = 1
) -> List[BoundReport]:
    """
    Verify the distinct-labeling bounds across the lambda grid.

    Each source is labeled by its own perturbed copy of f and its base
    hypothesis is trained on those labels. Per lambda, the absolute loss
    report (beta = 1) and the squared loss report (beta = 2) are returned.
    """
    if not 0 <= perturbation < 0.5:
        raise InputValidationError(f"perturbation must lie in [0, 0.5), got {perturbation!r}")
    support = build_grid_support(cfg)
    q1, q2, p = _task_distributions(cfg, support)
    f = quadrant_labels(support)
    sources = [q1, q2]
    source_fs = [
        perturbed_labeling(f, p, q, perturbation, cfg.seed, LABEL_NOISE_STREAM + i)
        for i, q in enumerate(sources, start=1)
    ]
    hyps = _train_sources(cfg, sources, source_fs)
    lambdas = np.linspace(0.0, 1.0, cfg.lambda_steps)
    absolute, squared = LossSpec.absolute(), LossSpec.squared()

    def row(lam: float) -> List[BoundReport]:
        z = SimplexWeights([lam, 1.0 - lam])
        return [
            thm16_verify(p, sources, hyps, source_fs, f, absolute, z, cfg.alpha),
            thm17_verify(p, sources, hyps, source_fs, f, squared, z, cfg.alpha),
        ]

    reports = [r for pair in _map_rows(row, lambdas, workers) for r in pair]
    violations = sum(not r.holds for r in reports)
    logger.info(f"multi-function experiment: {len(reports)} reports, {violations} violations")
    return reports


def run_approximation_experiment(
    cfg: GaussianGridConfig,
    sizes: Sequence[int] = (100, 1000, 10000),
    seeds: int = 20,
    smoothing: float = 1.0,
) -> ApproximationResult:
    """
    How fast the smoothed empirical sources approach the true ones.

    For every training size and seed, estimates both sources from samples and
    records max_i D_alpha(Q_i||Qhat_i); rows report the median over seeds.
    """
    if seeds < 1:
        raise InputValidationError(f"seeds must be >= 1, got {seeds}")
    if not smoothing > 0:
        raise InputValidationError("smoothing must be > 0 so the estimates keep full support")
    support = build_grid_support(cfg)
    q1, q2, _ = _task_distributions(cfg, support)
    order = AlphaOrder.of(cfg.alpha)
    rows = []
    for n in sizes:
        worst = []
        for s in range(seeds):
            divs = [
                renyi_divergence_bits(q, empirical_dist(sample_indices(q, n, cfg.seed, (APPROX_STREAM + i, s, n)), support, smoothing), order)
                for i, q in enumerate((q1, q2))
            ]
            worst.append(max(divs))
        median = float(np.median(worst))
        logger.info(f"n_train={n}: median max divergence {median:.6g} bits over {seeds} seeds")
        rows.append(ApproximationRow(n_train=int(n), median_max_divergence_bits=median, max_divergence_bits=worst))
    return ApproximationResult(alpha=cfg.alpha, smoothing=smoothing, rows=rows)
