"""Tail probabilities of i.i.d. empirical means: naive and tilted estimators.

Estimates P[S_n/n >= x] either directly or by sampling under the tilted law
and reweighting with exp(-theta*S_n + n*cgf(theta)).  At the saddle-point tilt
the estimator is asymptotically optimal: its second moment decays at twice
the rate of the probability.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import mc, tilt
from .errors import DomainError
from .mc import DecayFit, EstimatorResult
from .tilt import TiltableFamily

_LATTICE_FAMILIES = (tilt.Bernoulli, tilt.Poisson)


@dataclass(frozen=True)
class EmpiricalMeanProblem:
    """The event {S_n/n >= x} for n i.i.d. draws from ``family``.

    ``rare`` flags whether x sits at or above the mean; sub-mean thresholds
    are allowed (oracle tests use them) but the estimators are then pointless.
    """

    family: TiltableFamily
    n: int
    x: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def rare(self) -> bool:
        return self.x >= self.family.mean


def lattice_threshold(n: int, x: float) -> float:
    """Effective integer threshold for lattice-valued S_n.

    For integer-valued sums the event {S_n >= n*x} is {S_n >= ceil(n*x)};
    the small backoff keeps intended-integer products like 10*0.3 = 2.999...96
    from being rounded up a lattice site too far.
    """
    return float(math.ceil(n * x - 1e-9))


def _sum_threshold(problem: EmpiricalMeanProblem) -> float:
    if isinstance(problem.family, _LATTICE_FAMILIES):
        return lattice_threshold(problem.n, problem.x)
    return problem.n * problem.x


def naive_tail(problem: EmpiricalMeanProblem, N: int, seed: int, threads: int = 1) -> EstimatorResult:
    """Direct Monte Carlo estimate of P[S_n/n >= x]."""
    threshold = _sum_threshold(problem)
    family, n = problem.family, problem.n

    def sampler(ss, size):
        rng = np.random.default_rng(ss)
        sums = family.sample_sum(rng, n, size)
        return (sums >= threshold).astype(float)

    return mc.run_replications(sampler, N, seed, threads=threads)


def is_tail(
    problem: EmpiricalMeanProblem,
    theta: float | None = None,
    N: int = 10_000,
    seed: int = 0,
    threads: int = 1,
) -> EstimatorResult:
    """Importance-sampling estimate of P[S_n/n >= x] under the theta-tilt.

    Samples S_n under the tilted law and averages
    ``exp(-theta*S_n + n*cgf(theta)) * 1{S_n >= n*x}``; unbiased for every
    admissible theta.  The default tilt is the saddle point, the
    variance-optimal choice.  Each sample is bounded by
    exp(-n*(theta*x - cgf(theta))) (the Chebyshev bound), asserted per draw.
    """
    if theta is None:
        theta = default_theta(problem)
    if theta < 0.0:
        raise DomainError(f"tilt parameter must be >= 0, got {theta}")
    family, n = problem.family, problem.n
    threshold = _sum_threshold(problem)
    log_norm = n * family.cgf(theta)
    tilted = family.tilted(theta)
    bound = math.exp(-(theta * problem.n * problem.x - log_norm))

    def sampler(ss, size):
        rng = np.random.default_rng(ss)
        sums = tilted.sample_sum(rng, n, size)
        hits = sums >= threshold
        values = np.where(hits, np.exp(-theta * sums + log_norm), 0.0)
        assert np.all(values <= bound * (1.0 + 1e-12)), "per-draw Chebyshev bound violated"
        return values

    return mc.run_replications(sampler, N, seed, threads=threads)


def default_theta(problem: EmpiricalMeanProblem) -> float:
    """The saddle-point tilt, the variance-optimal default."""
    return tilt.saddle_theta(problem.family, problem.x)


def verify_rate(
    family: TiltableFamily,
    x: float,
    ladder: Sequence[int],
    N: int,
    seed: int,
    theta: float | None = None,
    threads: int = 1,
) -> DecayFit:
    """Fit ln P[S_n/n >= x] against n; the slope estimates -legendre(x).rate.

    Each rung is estimated by importance sampling at the saddle tilt (or the
    supplied theta).  Zero-hit rungs are dropped with a warning.
    """
    results = []
    for rung, n in enumerate(ladder):
        problem = EmpiricalMeanProblem(family, int(n), x)
        use_theta = default_theta(problem) if theta is None else theta
        results.append(is_tail(problem, use_theta, N, seed + rung, threads=threads))
    points, dropped = mc.decay_points(list(ladder), results)
    if dropped:
        warnings.warn(f"dropped {dropped} zero-hit rungs from the rate fit", stacklevel=2)
    return mc.fit_decay(points)


# -- exact oracles for lattice families ------------------------------------
#
# These are used by tests and the optimality certificate: for Bernoulli
# problems everything is computable by summing binomial terms, which gives
# an estimator-independent cross-check.


def binomial_tail(n: int, p: float, threshold: float) -> float:
    """P[Bin(n, p) >= threshold] by direct summation."""
    k_min = int(math.ceil(threshold - 1e-9))
    if k_min <= 0:
        return 1.0
    if k_min > n:
        return 0.0
    return float(sum(math.comb(n, k) * p**k * (1.0 - p) ** (n - k) for k in range(k_min, n + 1)))


def bernoulli_is_second_moment(n: int, p: float, x: float, theta: float) -> float:
    """Exact second moment of the tilted Bernoulli tail estimator.

    Enumerates E_theta[exp(-2*theta*S_n + 2n*cgf(theta)) 1{S_n >= n*x}] over
    the n+1 lattice values of S_n.
    """
    family = tilt.Bernoulli(p)
    gamma = family.cgf(theta)
    p_t = family.tilted(theta).p
    k_min = int(lattice_threshold(n, x))
    total = 0.0
    for k in range(max(k_min, 0), n + 1):
        pmf = math.comb(n, k) * p_t**k * (1.0 - p_t) ** (n - k)
        total += pmf * math.exp(-2.0 * theta * k + 2.0 * n * gamma)
    return total


def bernoulli_optimality_ladders(
    p: float, x: float, ladder: Sequence[int], theta: float | None = None
) -> tuple[DecayFit, DecayFit]:
    """Exact (second-moment, probability) decay fits over an n-ladder.

    Both ladders come from lattice enumeration, no sampling involved, so the
    optimality gap they certify is deterministic.
    """
    family = tilt.Bernoulli(p)
    use_theta = tilt.saddle_theta(family, x) if theta is None else theta
    m2_points = []
    p_points = []
    for n in ladder:
        m2 = bernoulli_is_second_moment(int(n), p, x, use_theta)
        prob = binomial_tail(int(n), p, lattice_threshold(int(n), x))
        m2_points.append((float(n), math.log(m2)))
        p_points.append((float(n), math.log(prob)))
    return mc.fit_decay(m2_points), mc.fit_decay(p_points)
