"""Compound-Poisson ruin probabilities and the investment extension.

The reserve earns premiums at rate p, pays i.i.d. claims at Poisson(lam)
arrivals, and is ruined when it goes negative.  Ruin can only happen at claim
times, so everything reduces to the embedded walk S_k = sum(Y_i - p*xi_i).
The adjustment coefficient theta_L is the positive zero of that walk's
c.g.f.; sampling the walk under the theta_L-tilt turns ruin into a certain
event and yields an unbiased, asymptotically optimal estimator
``exp(-theta_L * S_sigma)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import mc, tilt
from .errors import DivergentTail, MaxStepsExceeded, NetProfitViolated, NoRoot
from .mc import DecayFit, EstimatorResult
from .tilt import ClaimStep, Exponential, TiltableFamily

MAX_PATH_STEPS = int(1e7)
_ROOT_TOL = 1e-10


@dataclass(frozen=True)
class Investment:
    """Geometric Brownian stock with drift b and volatility sigma > 0."""

    b: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("stock volatility must be positive")


@dataclass(frozen=True)
class RuinModel:
    premium: float
    lam: float
    claims: TiltableFamily
    invest: Investment | None = None

    def __post_init__(self):
        if self.premium <= 0.0 or self.lam <= 0.0:
            raise ValueError("premium rate and claim intensity must be positive")
        if self.claims.mean <= 0.0:
            raise ValueError("claim family must have positive mean")

    @property
    def safety_loading(self) -> float:
        rho = self.lam * self.claims.mean
        return (self.premium - rho) / rho

    def step_family(self) -> ClaimStep:
        """The embedded walk increment Z = Y - premium * xi."""
        return ClaimStep(self.claims, self.premium, self.lam)


@dataclass(frozen=True)
class ExponentSolution:
    value: float
    residual: float
    kind: str  # "lundberg" or "invest"


def _gamma_shifted(model: RuinModel, theta: float) -> float:
    """gamma_Y(theta) = E[exp(theta*Y)] - 1."""
    return math.expm1(model.claims.cgf(theta))


def _solve_exponent(model: RuinModel, offset: float, kind: str) -> ExponentSolution:
    """Positive root of gamma_Y(theta) = premium*theta/lam + offset.

    Equivalently h(theta) = cgf_Y(theta) - ln(1 + premium*theta/lam + offset)
    = 0, a convex-vs-concave crossing with a unique positive root for
    light-tailed claims.  Bisection on (0, claim-domain edge) with a sign
    probe, then bisection refinement to 1e-10 residual.
    """
    if model.safety_loading <= 0.0:
        raise NetProfitViolated(
            f"safety loading {model.safety_loading:.6g} must be positive"
        )

    def h(theta):
        return _gamma_shifted(model, theta) - model.premium * theta / model.lam - offset

    _, hi = model.claims.cgf_domain
    # geometric probe from just above zero toward the claim-domain edge,
    # stopping 1e-9 inside when it is finite
    probes = []
    if math.isinf(hi):
        t = 1e-6
        while t < 1e12:
            probes.append(t)
            t *= 2.0
    else:
        frac = 0.5
        while hi * frac > 1e-9 * max(1.0, hi):
            probes.append(hi * (1.0 - frac))
            frac *= 0.5
        probes.append(hi - 1e-9 * max(1.0, hi))

    a = 1e-12
    b = None
    ha = h(a)
    for t in probes:
        ht = h(t)
        if ht > 0.0:
            b = t
            break
        a, ha = t, ht
    if b is None:
        raise NoRoot(f"no positive solution for kind={kind}; claims may be too heavy")
    # plain bisection: h is monotone on the bracket side we care about only
    # after the dip, but sign separation is all bisection needs
    for _ in range(200):
        mid = 0.5 * (a + b)
        hm = h(mid)
        if abs(hm) <= _ROOT_TOL or (b - a) <= 1e-16 * max(1.0, b):
            a = b = mid
            break
        if hm > 0.0:
            b = mid
        else:
            a = mid
    theta = 0.5 * (a + b)
    return ExponentSolution(value=theta, residual=h(theta), kind=kind)


def adjustment_coefficient(model: RuinModel) -> ExponentSolution:
    """The Lundberg exponent theta_L: gamma_Y(theta) = premium*theta/lam."""
    sol = _solve_exponent(model, 0.0, "lundberg")
    return sol


def lundberg_bound(model: RuinModel, x: float) -> float:
    """exp(-theta_L * x), a guaranteed upper bound on the ruin probability."""
    theta_l = adjustment_coefficient(model).value
    return math.exp(-theta_l * x)


def invest_exponent(model: RuinModel) -> ExponentSolution:
    """The improved exponent theta* when investing is allowed.

    Solves gamma_Y(theta) = premium*theta/lam + b^2/(2 sigma^2 lam); the
    offset term is what constant optimal investment buys, so theta* > theta_L
    whenever b != 0.
    """
    if model.invest is None:
        raise ValueError("model has no investment parameters")
    b, sigma = model.invest.b, model.invest.sigma
    offset = b * b / (2.0 * sigma * sigma * model.lam)
    return _solve_exponent(model, offset, "invest")


def optimal_fraction(model: RuinModel) -> float:
    """The asymptotically optimal constant stock position b/(sigma^2 theta*)."""
    if model.invest is None:
        raise ValueError("model has no investment parameters")
    if model.invest.b == 0.0:
        return 0.0
    theta_star = invest_exponent(model).value
    return model.invest.b / (model.invest.sigma**2 * theta_star)


def simulate_ruin_is(
    model: RuinModel, x: float, N: int, seed: int, threads: int = 1
) -> EstimatorResult:
    """Importance-sampling estimate of the infinite-horizon ruin probability.

    Runs the embedded walk under the theta_L-tilted law (claims tilted by
    theta_L, interarrivals by -premium*theta_L), stops at the first passage
    above x, and averages exp(-theta_L * S_sigma).  The tilted walk has
    positive drift so the passage time is a.s. finite; every sample is below
    exp(-theta_L * x) because the stopped walk sits above x.
    """
    if x < 0.0:
        raise ValueError("initial reserve must be nonnegative")
    theta_l = adjustment_coefficient(model).value
    step = model.step_family()
    tilted_step = step.tilted(theta_l)
    bound = math.exp(-theta_l * x)

    def sampler(ss, size):
        rng = np.random.default_rng(ss)
        walks = np.zeros(size)
        out = np.empty(size)
        active = np.arange(size)
        steps = 0
        while active.size:
            steps += 1
            if steps > MAX_PATH_STEPS:
                raise MaxStepsExceeded("tilted walk did not cross; check the model")
            walks[active] += tilted_step.sample(rng, active.size)
            crossed = walks[active] > x
            done = active[crossed]
            out[done] = np.exp(-theta_l * walks[done])
            active = active[~crossed]
        assert np.all(out < bound * (1.0 + 1e-12)), "sample above the Lundberg bound"
        return out

    return mc.run_replications(sampler, N, seed, threads=threads)


def simulate_ruin_naive_finite(
    model: RuinModel, x: float, horizon: float, N: int, seed: int, threads: int = 1
) -> EstimatorResult:
    """Plain Monte Carlo frequency of ruin before ``horizon`` (no tilting).

    Exact in distribution (claims at exact arrival times); used as an oracle
    for small reserves where ruin is not rare.
    """
    step = model.step_family()
    # enough arrivals to cover the horizon except with negligible probability
    lam_t = model.lam * horizon
    max_claims = int(lam_t + 12.0 * math.sqrt(lam_t) + 25.0)

    def sampler(ss, size):
        rng = np.random.default_rng(ss)
        ruined = np.zeros(size, dtype=bool)
        walks = np.zeros(size)
        times = np.zeros(size)
        for _ in range(max_claims):
            waits = rng.exponential(1.0 / model.lam, size)
            claims = model.claims.sample(rng, size)
            times += waits
            walks += claims - model.premium * waits
            ruined |= (walks > x) & (times <= horizon)
        return ruined.astype(float)

    return mc.run_replications(sampler, N, seed, threads=threads)


def ruin_decay_fit(
    model: RuinModel, reserves: Sequence[float], N: int, seed: int, threads: int = 1
) -> DecayFit:
    """Fit ln psi_hat(x) against the initial reserve ladder."""
    results = [
        simulate_ruin_is(model, float(x), N, seed + i, threads=threads)
        for i, x in enumerate(reserves)
    ]
    points, dropped = mc.decay_points(list(reserves), results)
    if dropped:
        warnings.warn(f"dropped {dropped} zero-hit rungs from the ruin decay fit", stacklevel=2)
    return mc.fit_decay(points)


def simulate_wealth_ruin(
    model: RuinModel,
    x: float,
    alpha: float,
    horizon: float,
    N: int,
    seed: int,
    euler_step: float | None = None,
    threads: int = 1,
) -> EstimatorResult:
    """Finite-horizon ruin frequency of the insurer investing ``alpha`` in stock.

    Wealth follows dV = (premium + alpha*b) dt + alpha*sigma dW minus claims
    at Poisson arrival times; claims are applied at their exact times and the
    Brownian part is advanced on an Euler grid refined to include them.  This
    truncates the infinite-horizon ruin probability from below (paths ruined
    after ``horizon`` are missed), so it underestimates; only decay-slope
    property tests should consume it.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    invest = model.invest or Investment(0.0, 1e-12)
    drift = model.premium + alpha * invest.b
    vol = alpha * invest.sigma
    dt = horizon / 4096.0 if euler_step is None else float(euler_step)
    n_steps = max(int(round(horizon / dt)), 1)
    dt = horizon / n_steps

    def sampler(ss, size):
        rng = np.random.default_rng(ss)
        wealth = np.full(size, float(x))
        ruined = np.zeros(size, dtype=bool)
        for _ in range(n_steps):
            counts = rng.poisson(model.lam * dt, size)
            # common case: diffuse across the whole step
            no_claim = counts == 0
            gauss = rng.normal(size=size)
            idx0 = np.nonzero(no_claim)[0]
            wealth[idx0] += drift * dt + vol * math.sqrt(dt) * gauss[idx0]
            ruined[idx0] |= wealth[idx0] < 0.0
            # claim-bearing paths: refine the grid at the arrival times
            for kv in np.unique(counts[~no_claim]):
                idx = np.nonzero(counts == kv)[0]
                arrivals = np.sort(rng.random((idx.size, kv)), axis=1) * dt
                prev = np.zeros(idx.size)
                for j in range(kv):
                    sub = arrivals[:, j] - prev
                    g = rng.normal(size=idx.size)
                    wealth[idx] += drift * sub + vol * np.sqrt(sub) * g
                    wealth[idx] -= model.claims.sample(rng, idx.size)
                    ruined[idx] |= wealth[idx] < 0.0
                    prev = arrivals[:, j]
                tail = dt - prev
                g = rng.normal(size=idx.size)
                wealth[idx] += drift * tail + vol * np.sqrt(tail) * g
                ruined[idx] |= wealth[idx] < 0.0
            # ruin is absorbing: freeze ruined paths by ignoring later dips
            # (wealth keeps evolving but the flag is monotone)
        return ruined.astype(float)

    return mc.run_replications(sampler, N, seed, threads=threads)


def uniform_exp_tail_check(claims: TiltableFamily, theta: float) -> float:
    """sup_z E[exp(theta*(Y - z)) | Y > z], the uniform overshoot transform.

    Memorylessness makes the conditional overshoot of exponential claims an
    Exponential(nu) again, so the supremum over the z-grid is the constant
    nu/(nu - theta), diverging at theta >= nu.  Other claim families have no
    evaluable overshoot transform in this catalog.
    """
    if isinstance(claims, Exponential):
        nu = claims.lam
        if theta >= nu:
            raise DivergentTail(f"theta={theta} >= claim intensity {nu}")
        return nu / (nu - theta)
    raise NotImplementedError(
        "overshoot transform is evaluable for exponential claims only"
    )
