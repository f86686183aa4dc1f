import math

import numpy as np
import pytest

from rareflow import tilt
from rareflow.errors import DomainError, NotAttained
from rareflow.tilt import Bernoulli, ClaimStep, Exponential, Normal, Poisson

from oracles import cgf_by_quadrature, legendre_by_grid

FAMILIES = [
    Bernoulli(0.3),
    Poisson(1.7),
    Normal(0.4, 2.25),
    Exponential(1.3),
    ClaimStep(Exponential(1.0), 2.0, 1.0),
]


def finite_diff(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def interior_grid(family, count=9):
    lo, hi = family.cgf_domain
    lo = max(lo, -3.0) + 0.05
    hi = min(hi, 3.0) - 0.05
    return np.linspace(lo, hi, count)


class TestCgfEval:
    def test_poisson_at_zero(self):
        assert tilt.cgf_eval(Poisson(1.0), 0.0) == 0.0

    def test_normal_paper_value(self):
        # Normal(0, 4) at theta=1: theta^2 sigma^2 / 2 = 2
        assert tilt.cgf_eval(Normal(0.0, 4.0), 1.0) == 2.0

    def test_exponential_against_quadrature(self):
        lam = 2.0
        value = tilt.cgf_eval(Exponential(lam), 1.0)
        assert value == pytest.approx(math.log(2.0), abs=1e-12)
        quad = cgf_by_quadrature(lambda x: lam * math.exp(-lam * x), 1.0, 0.0, 60.0)
        assert value == pytest.approx(quad, abs=1e-9)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            tilt.cgf_eval(Exponential(2.0), 2.0)
        with pytest.raises(DomainError):
            tilt.cgf_eval(ClaimStep(Exponential(1.0), 2.0, 1.0), -0.5)

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: type(f).__name__)
    def test_zero_at_origin(self, family):
        assert tilt.cgf_eval(family, 0.0) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: type(f).__name__)
    def test_convexity_on_grid(self, family):
        grid = interior_grid(family, 21)
        h = (grid[1] - grid[0]) / 4.0
        for theta in grid[1:-1]:
            second = (family.cgf(theta + h) - 2.0 * family.cgf(theta) + family.cgf(theta - h)) / h**2
            assert second >= -1e-7

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: type(f).__name__)
    def test_derivative_at_zero_is_mean(self, family):
        fd = finite_diff(family.cgf, 0.0)
        assert fd == pytest.approx(family.mean, abs=1e-8)


class TestTilt:
    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: type(f).__name__)
    def test_zero_tilt_is_identity(self, family):
        assert tilt.tilt(family, 0.0) == family

    def test_poisson_scaling(self):
        # intensity multiplied by e^theta, bit-for-bit the formula's value
        theta = math.log(3.0)
        assert tilt.tilt(Poisson(2.0), theta) == Poisson(2.0 * math.exp(theta))
        assert tilt.tilt(Poisson(2.0), theta).lam == pytest.approx(6.0, rel=1e-15)

    def test_exponential_shift(self):
        assert tilt.tilt(Exponential(3.0), 1.0) == Exponential(2.0)

    def test_bernoulli_closed_form(self):
        p, theta = 0.3, 0.7
        expected = p * math.exp(theta) / (1.0 - p + p * math.exp(theta))
        assert tilt.tilt(Bernoulli(p), theta) == Bernoulli(expected)

    def test_normal_mean_shift(self):
        assert tilt.tilt(Normal(0.0, 4.0), 0.5) == Normal(2.0, 4.0)

    def test_claimstep_tilts_both_parts(self):
        family = ClaimStep(Exponential(1.0), 2.0, 1.0)
        tilted = tilt.tilt(family, 0.25)
        assert tilted.claim == Exponential(0.75)
        assert tilted.lam == 1.5  # lam + premium * theta
        assert tilted.premium == 2.0

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: type(f).__name__)
    def test_tilted_mean_matches_cgf_slope(self, family):
        # sample mean of 1e6 tilted draws within 4 SE of the finite-difference slope
        lo, hi = family.cgf_domain
        theta = min(0.4, 0.5 * (hi if math.isfinite(hi) else 1.0))
        tilted = tilt.tilt(family, theta)
        rng = np.random.default_rng(np.random.SeedSequence([2024, hash(type(family).__name__) % 2**32]))
        draws = tilted.sample(rng, 1_000_000)
        target = finite_diff(family.cgf, theta)
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - target) < 4.0 * se


class TestLegendre:
    def test_normal_paper_rate(self):
        res = tilt.legendre(Normal(0.0, 1.0), 1.0)
        assert res.rate == pytest.approx(0.5, abs=1e-15)
        assert res.attained

    def test_bernoulli_at_mean_exact_zero(self):
        assert tilt.legendre(Bernoulli(0.3), 0.3).rate == 0.0

    def test_poisson_paper_formula(self):
        res = tilt.legendre(Poisson(1.0), 2.0)
        expected = 2.0 * math.log(2.0) - 1.0
        assert res.rate == pytest.approx(expected, abs=1e-12)
        grid = np.linspace(-3.0, 5.0, 20001)
        numeric = legendre_by_grid(Poisson(1.0).cgf, grid, 2.0)
        assert res.rate == pytest.approx(numeric, abs=1e-6)

    def test_exponential_formula(self):
        lam, x = 1.3, 2.5
        res = tilt.legendre(Exponential(lam), x)
        assert res.rate == pytest.approx(lam * x - 1.0 - math.log(lam * x), abs=1e-12)

    def test_infinite_outside_support(self):
        assert not tilt.legendre(Bernoulli(0.3), 1.5).finite
        assert not tilt.legendre(Bernoulli(0.3), -0.1).finite
        assert not tilt.legendre(Poisson(1.0), -1.0).finite
        assert not tilt.legendre(Exponential(1.0), -2.0).finite

    def test_boundary_atoms_finite_not_attained(self):
        res = tilt.legendre(Bernoulli(0.25), 1.0)
        assert res.finite and not res.attained
        assert res.rate == pytest.approx(-math.log(0.25), abs=1e-12)

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: type(f).__name__)
    def test_rate_zero_at_mean(self, family):
        res = tilt.legendre(family, family.mean)
        assert res.rate <= 1e-12

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: type(f).__name__)
    def test_monotone_above_mean(self, family):
        xs = family.mean + np.linspace(0.0, 2.0, 9)
        rates = []
        for x in xs:
            res = tilt.legendre(family, float(x))
            rates.append(res.rate if res.finite else math.inf)
        assert all(r2 >= r1 - 1e-12 for r1, r2 in zip(rates, rates[1:]))

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: type(f).__name__)
    def test_biconjugate_recovers_cgf(self, family):
        # Gamma**(theta) from a fine x-grid of Gamma* values, with a parabolic
        # refinement at the grid argmax to kill the O(dx^2) grid-sup error
        thetas = interior_grid(family, 5)
        lo_x = family.cgf_prime(interior_grid(family, 3)[0])
        hi_x = family.cgf_prime(interior_grid(family, 3)[-1])
        xs = np.linspace(lo_x, hi_x, 4001)
        rates = np.array([tilt.legendre(family, float(x)).rate for x in xs])
        for theta in thetas:
            values = theta * xs - rates
            k = int(np.argmax(values))
            biconj = values[k]
            if 0 < k < len(xs) - 1:
                y0, y1, y2 = values[k - 1], values[k], values[k + 1]
                denom = y0 - 2.0 * y1 + y2
                if denom < 0.0:
                    biconj = y1 - 0.125 * (y2 - y0) ** 2 / denom
            assert biconj == pytest.approx(family.cgf(theta), abs=1e-6)


class TestSaddleTheta:
    def test_normal_linear(self):
        for var in (0.5, 1.0, 4.0):
            for x in (-1.0, 0.3, 2.0):
                assert tilt.saddle_theta(Normal(0.0, var), x) == pytest.approx(x / var, abs=1e-12)

    def test_bernoulli_closed_form_oracle(self):
        # p e^t/(1-p+p e^t) = x  =>  t = ln(x(1-p)/(p(1-x)))
        theta = tilt.saddle_theta(Bernoulli(0.25), 0.5)
        assert theta == pytest.approx(math.log(3.0), abs=1e-12)

    def test_poisson_root(self):
        theta = tilt.saddle_theta(Poisson(1.0), 2.0)
        assert theta == pytest.approx(math.log(2.0), abs=1e-12)

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: type(f).__name__)
    def test_residual_and_tilted_mean(self, family):
        x = family.mean + 0.37
        theta = tilt.saddle_theta(family, x)
        assert abs(family.cgf_prime(theta) - x) <= 1e-10
        assert tilt.tilt(family, theta).mean == pytest.approx(x, abs=1e-9)

    def test_not_attained(self):
        with pytest.raises(NotAttained):
            tilt.saddle_theta(Bernoulli(0.25), 1.0)
        with pytest.raises(NotAttained):
            tilt.saddle_theta(Bernoulli(0.25), 1.5)
        with pytest.raises(NotAttained):
            tilt.saddle_theta(Exponential(1.0), -0.5)


class TestClaimStep:
    def test_cgf_composition(self):
        family = ClaimStep(Exponential(1.0), 2.0, 1.0)
        theta = 0.3
        expected = Exponential(1.0).cgf(theta) + math.log(1.0 / (1.0 + 2.0 * theta))
        assert family.cgf(theta) == pytest.approx(expected, abs=1e-15)

    def test_domain_intersection(self):
        family = ClaimStep(Exponential(1.5), 2.0, 1.0)
        assert family.cgf_domain == (-0.5, 1.5)

    def test_mean(self):
        family = ClaimStep(Exponential(1.0), 2.0, 1.0)
        assert family.mean == pytest.approx(1.0 - 2.0, abs=1e-15)

    def test_sample_sum_matches_iterated_sampling_in_mean(self):
        family = ClaimStep(Exponential(1.0), 2.0, 1.0)
        rng = np.random.default_rng(7)
        batch = family.sample_sum(rng, 5, 200_000)
        se = batch.std(ddof=1) / math.sqrt(batch.size)
        assert abs(batch.mean() - 5.0 * family.mean) < 4.0 * se
