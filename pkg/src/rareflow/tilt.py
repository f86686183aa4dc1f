"""Cumulant generating functions, exponential tilting, and rate functions.

The family catalog covers Bernoulli, Poisson, Normal, Exponential, and the
compound claim-minus-premium step ``Z = Y - p*xi`` built from a claim family
``Y`` and an exponential interarrival ``xi``.  Every family knows its
closed-form c.g.f., the open interval where it is finite, its tilted
counterpart, and how to draw samples (including exact draws of i.i.d. sums).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotAttained

SADDLE_TOL = 1e-10
BOUNDARY_PAD = 1e-9   # how far inside an open domain endpoint solvers may go


@dataclass(frozen=True)
class LegendreResult:
    """Value of the convex conjugate of a c.g.f. at a point x.

    ``rate`` is finite iff ``finite``; an infinite rate (x outside the support
    hull) is encoded by ``finite=False`` so downstream decay fits never see a
    floating infinity.  ``attained`` says whether the defining supremum is
    reached at an interior saddle point ``theta_star`` (nan otherwise).
    """

    x: float
    theta_star: float
    rate: float
    attained: bool
    finite: bool = True


class TiltableFamily(ABC):
    """A distribution with closed-form c.g.f. and exponential tilt."""

    @property
    @abstractmethod
    def cgf_domain(self) -> tuple[float, float]:
        """Open interval (lo, hi) containing 0 on which the c.g.f. is finite."""

    @abstractmethod
    def cgf(self, theta: float) -> float:
        ...

    @abstractmethod
    def cgf_prime(self, theta: float) -> float:
        """Derivative of the c.g.f.; the mean under the theta-tilted law."""

    @abstractmethod
    def cgf_second(self, theta: float) -> float:
        """Second derivative; the variance under the theta-tilted law."""

    @abstractmethod
    def tilted(self, theta: float) -> "TiltableFamily":
        ...

    @property
    @abstractmethod
    def mean(self) -> float:
        ...

    @property
    @abstractmethod
    def variance(self) -> float:
        ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        ...

    def sample_sum(self, rng: np.random.Generator, n: int, size: int) -> np.ndarray:
        """Draw ``size`` copies of a sum of ``n`` i.i.d. variates.

        Subclasses override with the exact convolution law where one exists;
        the fallback sums n individual draws.
        """
        total = np.zeros(size)
        for _ in range(n):
            total += self.sample(rng, size)
        return total

    def _check_theta(self, theta: float) -> None:
        lo, hi = self.cgf_domain
        if not (lo < theta < hi) or not math.isfinite(theta):
            raise DomainError(
                f"theta={theta} outside c.g.f. domain ({lo}, {hi}) of {self!r}"
            )

    def _legendre_closed(self, x: float) -> LegendreResult | None:
        """Closed-form conjugate where known; None defers to the numeric path."""
        return None


@dataclass(frozen=True)
class Bernoulli(TiltableFamily):
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"Bernoulli parameter must lie in (0,1), got {self.p}")

    @property
    def cgf_domain(self):
        return (-math.inf, math.inf)

    def cgf(self, theta):
        self._check_theta(theta)
        return math.log(1.0 - self.p + self.p * math.exp(theta))

    def cgf_prime(self, theta):
        self._check_theta(theta)
        e = self.p * math.exp(theta)
        return e / (1.0 - self.p + e)

    def cgf_second(self, theta):
        m = self.cgf_prime(theta)
        return m * (1.0 - m)

    def tilted(self, theta):
        self._check_theta(theta)
        e = self.p * math.exp(theta)
        return Bernoulli(e / (1.0 - self.p + e))

    @property
    def mean(self):
        return self.p

    @property
    def variance(self):
        return self.p * (1.0 - self.p)

    def sample(self, rng, size):
        return (rng.random(size) < self.p).astype(float)

    def sample_sum(self, rng, n, size):
        return rng.binomial(n, self.p, size).astype(float)

    def _legendre_closed(self, x):
        p = self.p
        if x < 0.0 or x > 1.0:
            return LegendreResult(x, math.nan, math.inf, attained=False, finite=False)
        if x == 0.0:
            return LegendreResult(x, math.nan, -math.log1p(-p), attained=False)
        if x == 1.0:
            return LegendreResult(x, math.nan, -math.log(p), attained=False)
        theta = math.log(x * (1.0 - p) / (p * (1.0 - x)))
        rate = x * math.log(x / p) + (1.0 - x) * math.log((1.0 - x) / (1.0 - p))
        return LegendreResult(x, theta, max(rate, 0.0), attained=True)


@dataclass(frozen=True)
class Poisson(TiltableFamily):
    lam: float

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError(f"Poisson intensity must be positive, got {self.lam}")

    @property
    def cgf_domain(self):
        return (-math.inf, math.inf)

    def cgf(self, theta):
        self._check_theta(theta)
        return self.lam * math.expm1(theta)

    def cgf_prime(self, theta):
        self._check_theta(theta)
        return self.lam * math.exp(theta)

    def cgf_second(self, theta):
        return self.cgf_prime(theta)

    def tilted(self, theta):
        self._check_theta(theta)
        return Poisson(self.lam * math.exp(theta))

    @property
    def mean(self):
        return self.lam

    @property
    def variance(self):
        return self.lam

    def sample(self, rng, size):
        return rng.poisson(self.lam, size).astype(float)

    def sample_sum(self, rng, n, size):
        return rng.poisson(n * self.lam, size).astype(float)

    def _legendre_closed(self, x):
        if x < 0.0:
            return LegendreResult(x, math.nan, math.inf, attained=False, finite=False)
        if x == 0.0:
            return LegendreResult(x, math.nan, self.lam, attained=False)
        theta = math.log(x / self.lam)
        rate = x * math.log(x / self.lam) + self.lam - x
        return LegendreResult(x, theta, max(rate, 0.0), attained=True)


@dataclass(frozen=True)
class Normal(TiltableFamily):
    m: float
    var: float

    def __post_init__(self):
        if self.var <= 0.0:
            raise ValueError(f"Normal variance must be positive, got {self.var}")

    @property
    def cgf_domain(self):
        return (-math.inf, math.inf)

    def cgf(self, theta):
        self._check_theta(theta)
        return self.m * theta + 0.5 * theta * theta * self.var

    def cgf_prime(self, theta):
        self._check_theta(theta)
        return self.m + theta * self.var

    def cgf_second(self, theta):
        return self.var

    def tilted(self, theta):
        self._check_theta(theta)
        return Normal(self.m + theta * self.var, self.var)

    @property
    def mean(self):
        return self.m

    @property
    def variance(self):
        return self.var

    def sample(self, rng, size):
        return rng.normal(self.m, math.sqrt(self.var), size)

    def sample_sum(self, rng, n, size):
        return rng.normal(n * self.m, math.sqrt(n * self.var), size)

    def _legendre_closed(self, x):
        theta = (x - self.m) / self.var
        rate = (x - self.m) ** 2 / (2.0 * self.var)
        return LegendreResult(x, theta, rate, attained=True)


@dataclass(frozen=True)
class Exponential(TiltableFamily):
    lam: float

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError(f"Exponential intensity must be positive, got {self.lam}")

    @property
    def cgf_domain(self):
        return (-math.inf, self.lam)

    def cgf(self, theta):
        self._check_theta(theta)
        return math.log(self.lam / (self.lam - theta))

    def cgf_prime(self, theta):
        self._check_theta(theta)
        return 1.0 / (self.lam - theta)

    def cgf_second(self, theta):
        self._check_theta(theta)
        return 1.0 / (self.lam - theta) ** 2

    def tilted(self, theta):
        self._check_theta(theta)
        return Exponential(self.lam - theta)

    @property
    def mean(self):
        return 1.0 / self.lam

    @property
    def variance(self):
        return 1.0 / self.lam**2

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.lam, size)

    def sample_sum(self, rng, n, size):
        return rng.gamma(n, 1.0 / self.lam, size)

    def _legendre_closed(self, x):
        if x <= 0.0:
            return LegendreResult(x, math.nan, math.inf, attained=False, finite=False)
        theta = self.lam - 1.0 / x
        rate = self.lam * x - 1.0 - math.log(self.lam * x)
        return LegendreResult(x, theta, max(rate, 0.0), attained=True)


@dataclass(frozen=True)
class ClaimStep(TiltableFamily):
    """One step ``Z = Y - p*xi`` of the net-payout walk embedded at claim times.

    ``Y`` follows the claim family, ``xi`` is the Exponential(lam) interarrival,
    and ``p`` is the premium rate.  Independence gives
    ``cgf_Z(theta) = cgf_Y(theta) + ln(lam / (lam + p*theta))`` on the
    intersection of the claim domain with ``theta > -lam/p``.
    """

    claim: TiltableFamily
    premium: float
    lam: float

    def __post_init__(self):
        if self.premium <= 0.0:
            raise ValueError("premium rate must be positive")
        if self.lam <= 0.0:
            raise ValueError("claim arrival intensity must be positive")

    @property
    def cgf_domain(self):
        claim_lo, claim_hi = self.claim.cgf_domain
        return (max(claim_lo, -self.lam / self.premium), claim_hi)

    def cgf(self, theta):
        self._check_theta(theta)
        return self.claim.cgf(theta) + math.log(self.lam / (self.lam + self.premium * theta))

    def cgf_prime(self, theta):
        self._check_theta(theta)
        return self.claim.cgf_prime(theta) - self.premium / (self.lam + self.premium * theta)

    def cgf_second(self, theta):
        self._check_theta(theta)
        return self.claim.cgf_second(theta) + (self.premium / (self.lam + self.premium * theta)) ** 2

    def tilted(self, theta):
        self._check_theta(theta)
        return ClaimStep(self.claim.tilted(theta), self.premium, self.lam + self.premium * theta)

    @property
    def mean(self):
        return self.claim.mean - self.premium / self.lam

    @property
    def variance(self):
        return self.claim.variance + (self.premium / self.lam) ** 2

    def sample(self, rng, size):
        claims = self.claim.sample(rng, size)
        waits = rng.exponential(1.0 / self.lam, size)
        return claims - self.premium * waits

    def sample_sum(self, rng, n, size):
        claims = self.claim.sample_sum(rng, n, size)
        waits = rng.gamma(n, 1.0 / self.lam, size)
        return claims - self.premium * waits


def cgf_eval(family: TiltableFamily, theta: float) -> float:
    """Evaluate the cumulant generating function at theta.

    Raises DomainError when theta falls outside the family's open domain.
    """
    return family.cgf(theta)


def tilt(family: TiltableFamily, theta: float) -> TiltableFamily:
    """Return the exponentially tilted family at parameter theta."""
    return family.tilted(theta)


def _expansion_grid(lo: float, hi: float, toward_hi: bool):
    """Geometric probe sequence from 0 toward one open domain endpoint.

    The domain contains 0, so hi > 0 and lo < 0.  Finite endpoints are
    approached by halving the remaining gap, stopping a pad inside (the
    c.g.f. derivative blows up there); infinite ones by doubling.
    """
    endpoint = hi if toward_hi else lo
    if math.isinf(endpoint):
        step = 1e-3 if toward_hi else -1e-3
        while abs(step) < 1e30:
            yield step
            step *= 2.0
    else:
        pad = BOUNDARY_PAD * max(1.0, abs(endpoint))
        frac = 0.5
        while abs(endpoint) * frac > pad:
            yield endpoint * (1.0 - frac)
            frac *= 0.5
        yield endpoint - math.copysign(pad, endpoint)


def _bracketed_saddle(family: TiltableFamily, x: float) -> float | None:
    """Solve cgf'(theta) = x by bracketing + safeguarded Newton.

    Returns None when the mean range never reaches x inside the domain
    (supremum at a boundary).  cgf' is nondecreasing by convexity, so the
    probe expands geometrically from 0 toward the relevant endpoint, stopping
    just inside open boundaries where cgf' blows up.
    """
    lo, hi = family.cgf_domain
    f0 = family.cgf_prime(0.0) - x
    if f0 == 0.0:
        return 0.0
    toward_hi = f0 < 0.0
    a, fa = 0.0, f0
    b = None
    for theta in _expansion_grid(lo, hi, toward_hi):
        ft = family.cgf_prime(theta) - x
        if (ft >= 0.0) != toward_hi and ft != 0.0:
            # still on the same side: tighten the near end of the bracket
            a, fa = theta, ft
            continue
        b = theta
        break
    if b is None:
        return None
    if a > b:
        a, b = b, a
    # safeguarded Newton on f(theta) = cgf'(theta) - x with bisection fallback
    theta = 0.5 * (a + b)
    for _ in range(200):
        f = family.cgf_prime(theta) - x
        if abs(f) <= SADDLE_TOL:
            return theta
        if f > 0.0:
            b = theta
        else:
            a = theta
        fpp = family.cgf_second(theta)
        step_ok = False
        if fpp > 0.0 and math.isfinite(fpp):
            cand = theta - f / fpp
            if a < cand < b:
                theta = cand
                step_ok = True
        if not step_ok:
            theta = 0.5 * (a + b)
    f = family.cgf_prime(theta) - x
    if abs(f) <= SADDLE_TOL:
        return theta
    raise NotAttained(f"saddle solver stalled at residual {f:.3e} for x={x}")


def saddle_theta(family: TiltableFamily, x: float) -> float:
    """Solve the saddle-point equation cgf'(theta) = x.

    The returned theta satisfies ``|cgf'(theta) - x| <= 1e-10`` and the
    tilted family at theta has mean x.  Raises NotAttained when x is at or
    beyond the boundary of attainable means.
    """
    closed = family._legendre_closed(x)
    if closed is not None:
        if not closed.attained:
            raise NotAttained(f"x={x} not an interior mean for {family!r}")
        return closed.theta_star
    theta = _bracketed_saddle(family, x)
    if theta is None:
        raise NotAttained(f"x={x} not an interior mean for {family!r}")
    return theta


def legendre(family: TiltableFamily, x: float) -> LegendreResult:
    """Fenchel-Legendre transform sup_theta [theta*x - cgf(theta)].

    Closed forms are used for the four catalog families; the compound step
    family is handled by the numeric saddle solver.  Outside the support hull
    the rate is infinite, flagged via ``finite=False``.
    """
    closed = family._legendre_closed(x)
    if closed is not None:
        return closed
    theta = _bracketed_saddle(family, x)
    if theta is not None:
        rate = theta * x - family.cgf(theta)
        return LegendreResult(x, theta, max(rate, 0.0), attained=True)
    # supremum at a domain boundary: classify finite limit vs divergence by
    # tracking the objective along the geometric expansion
    lo, hi = family.cgf_domain
    toward_hi = x > family.mean
    best = 0.0
    for theta in _expansion_grid(lo, hi, toward_hi):
        val = theta * x - family.cgf(theta)
        gain = val - best
        if val > best:
            best = val
        if gain <= 1e-14 * max(1.0, abs(best)):
            return LegendreResult(x, math.nan, max(best, 0.0), attained=False)
    return LegendreResult(x, math.nan, math.inf, attained=False, finite=False)
