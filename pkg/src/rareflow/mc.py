"""Seeded Monte Carlo replication engine and decay-rate fitting.

Replications are split into fixed-size batches.  Batch ``b`` of a run with
seed ``s`` draws from ``SeedSequence([s, b])``, so the stream layout depends
only on ``(sampler, n, seed)`` — never on thread count — and batch statistics
are merged in batch-index order.  Samplers receive the batch SeedSequence and
may spawn independent sub-streams from it (path noise vs. kill decisions,
say) without perturbing each other.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientData, MismatchedLadders, NonFiniteInput

BATCH_SIZE = 1 << 14

# log_mean of a run whose empirical mean is not positive; kept out of decay
# fits (see decay_points).
LOG_ZERO = -math.inf

Sampler = Callable[[np.random.SeedSequence, int], np.ndarray]


@dataclass(frozen=True)
class EstimatorResult:
    """Summary statistics of one Monte Carlo run."""

    n: int
    mean: float
    variance: float
    std_error: float
    relative_error: float
    second_moment: float
    log_mean: float


@dataclass(frozen=True)
class DecayFit:
    """Ordinary least squares fit of log-probability against a scale."""

    points: tuple[tuple[float, float], ...]
    slope: float
    intercept: float
    r_squared: float


def _merge(stats_a, stats_b):
    """Chan's pairwise update for (count, mean, M2) in fixed order."""
    na, ma, sa = stats_a
    nb, mb, sb = stats_b
    n = na + nb
    delta = mb - ma
    mean = ma + delta * (nb / n)
    m2 = sa + sb + delta * delta * (na * nb / n)
    return (n, mean, m2)


def _batch_stats(values: np.ndarray):
    n = values.size
    mean = float(np.mean(values))
    m2 = float(np.sum((values - mean) ** 2))
    return (n, mean, m2)


def run_replications(
    sampler: Sampler,
    n: int,
    seed: int,
    threads: int = 1,
) -> EstimatorResult:
    """Average ``n`` replications of a scalar sampler.

    ``sampler(seed_seq, size)`` must return ``size`` values drawn from
    generators derived from ``seed_seq`` only.  The result is bit-identical
    for fixed ``(sampler, n, seed)`` whatever ``threads`` is.
    """
    if n < 2:
        raise ValueError("need at least 2 replications")
    batches = []
    start = 0
    index = 0
    while start < n:
        size = min(BATCH_SIZE, n - start)
        batches.append((index, size))
        start += size
        index += 1

    def one_batch(batch):
        idx, size = batch
        ss = np.random.SeedSequence([seed, idx])
        values = np.asarray(sampler(ss, size), dtype=float)
        if values.shape != (size,):
            raise ValueError(f"sampler returned shape {values.shape}, wanted ({size},)")
        return _batch_stats(values)

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_batch = list(pool.map(one_batch, batches))
    else:
        per_batch = [one_batch(b) for b in batches]

    total = per_batch[0]
    for stats in per_batch[1:]:
        total = _merge(total, stats)
    count, mean, m2 = total
    variance = m2 / (count - 1) if count > 1 else 0.0
    variance = max(variance, 0.0)
    std_error = math.sqrt(variance / count)
    relative_error = std_error / mean if mean > 0.0 else math.nan
    second_moment = (m2 + count * mean * mean) / count
    log_mean = math.log(mean) if mean > 0.0 else LOG_ZERO
    return EstimatorResult(
        n=count,
        mean=mean,
        variance=variance,
        std_error=std_error,
        relative_error=relative_error,
        second_moment=second_moment,
        log_mean=log_mean,
    )


def fit_decay(points: Sequence[tuple[float, float]]) -> DecayFit:
    """Least-squares slope/intercept of log_prob against scale.

    Non-finite log-probabilities are rejected outright (zero-hit runs must be
    filtered by the caller, see ``decay_points``), as are ladders with fewer
    than 3 distinct scales.
    """
    pts = tuple((float(s), float(lp)) for s, lp in points)
    if len(pts) < 3:
        raise InsufficientData(f"need at least 3 points, got {len(pts)}")
    scales = np.array([p[0] for p in pts])
    logs = np.array([p[1] for p in pts])
    if not np.all(np.isfinite(scales)) or not np.all(np.isfinite(logs)):
        bad = [p for p in pts if not (math.isfinite(p[0]) and math.isfinite(p[1]))]
        raise NonFiniteInput(f"non-finite points rejected: {bad}")
    if len(set(scales.tolist())) != len(pts):
        raise InsufficientData("scales must be distinct")
    sxx = float(np.sum((scales - scales.mean()) ** 2))
    sxy = float(np.sum((scales - scales.mean()) * (logs - logs.mean())))
    slope = sxy / sxx
    intercept = float(logs.mean() - slope * scales.mean())
    residuals = logs - (slope * scales + intercept)
    ss_res = float(np.sum(residuals**2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    if ss_tot == 0.0:
        r_squared = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r_squared = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return DecayFit(points=pts, slope=slope, intercept=intercept, r_squared=r_squared)


def decay_points(
    scales: Sequence[float], results: Sequence[EstimatorResult]
) -> tuple[list[tuple[float, float]], int]:
    """Pair scales with log-estimates, dropping zero-hit rungs.

    Returns the usable points and the number of dropped rungs so callers can
    warn instead of silently fitting a truncated ladder.
    """
    points = []
    dropped = 0
    for scale, res in zip(scales, results):
        if math.isfinite(res.log_mean):
            points.append((float(scale), res.log_mean))
        else:
            dropped += 1
    return points, dropped


def optimality_gap(second_moment_fit: DecayFit, prob_fit: DecayFit) -> float:
    """Slope of the second moment minus twice the probability slope.

    A value near zero certifies asymptotic optimality of an importance
    sampling scheme: the second moment then decays at twice the rate of the
    probability itself, the Cauchy-Schwarz-optimal speed.
    """
    ladder_a = tuple(p[0] for p in second_moment_fit.points)
    ladder_b = tuple(p[0] for p in prob_fit.points)
    if ladder_a != ladder_b:
        raise MismatchedLadders(f"ladders differ: {ladder_a} vs {ladder_b}")
    return second_moment_fit.slope - 2.0 * prob_fit.slope
