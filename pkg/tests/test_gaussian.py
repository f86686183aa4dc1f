import math

import mpmath
import numpy as np
import pytest

from rareflow.gaussian import norm_cdf, norm_pdf, norm_ppf, norm_sf

mpmath.mp.dps = 40


def mp_cdf(z):
    return mpmath.ncdf(z)


class TestAccuracy:
    def test_body_relative_accuracy(self):
        # 1e-14 relative through the body of the distribution
        for z in np.linspace(-3.0, 3.0, 121):
            exact = float(mp_cdf(z))
            assert norm_cdf(z) == pytest.approx(exact, rel=1e-14)

    def test_tail_relative_accuracy_to_eight(self):
        # 1e-12 relative out to z = +-8; factor thresholds reach this range
        for z in np.linspace(3.0, 8.0, 26):
            lower = float(mp_cdf(-z))
            assert norm_cdf(-z) == pytest.approx(lower, rel=1e-12)
            assert norm_sf(z) == pytest.approx(lower, rel=1e-12)

    def test_quantile_round_trip(self):
        for q in (1e-12, 1e-8, 1e-4, 0.3, 0.5, 0.9, 1.0 - 1e-8):
            z = norm_ppf(q)
            assert norm_cdf(z) == pytest.approx(q, rel=1e-11)

    def test_quantile_against_mpmath(self):
        for q in (0.01, 0.1, 0.5, 0.975, 0.99):
            exact = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(q) - 1))
            assert norm_ppf(q) == pytest.approx(exact, rel=1e-13, abs=1e-14)

    def test_pdf(self):
        assert norm_pdf(0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=1e-15)
        assert norm_pdf(np.array([1.0, -1.0]))[0] == pytest.approx(
            math.exp(-0.5) / math.sqrt(2.0 * math.pi), rel=1e-15
        )
