import math

import numpy as np
import pytest

from dememlab.errors import DomainError
from dememlab.statsfns import (
    clopper_pearson_interval,
    clopper_pearson_lower,
    clopper_pearson_upper,
    normal_cdf,
    normal_quantile,
)


def erf_series(x, terms=80):
    """Independent Taylor-series oracle for erf, accurate to ~1e-15 here."""
    s = 0.0
    for n in range(terms):
        s += (-1) ** n * x ** (2 * n + 1) / (math.factorial(n) * (2 * n + 1))
    return 2.0 / math.sqrt(math.pi) * s


def phi_series(x):
    return 0.5 * (1.0 + erf_series(x / math.sqrt(2.0)))


@pytest.mark.parametrize("x", [-3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.5])
def test_normal_cdf_matches_series_oracle(x):
    assert abs(normal_cdf(x) - phi_series(x)) < 1e-12


def test_normal_cdf_at_one_published_value():
    assert abs(normal_cdf(1.0) - 0.8413447460685429) < 1e-15


def test_quantile_inverts_cdf():
    for p in [1e-9, 0.001, 0.1, 0.5, 0.9, 0.999, 1 - 1e-9]:
        assert abs(normal_cdf(normal_quantile(p)) - p) < 1e-11


def test_quantile_clamps_extremes():
    assert np.isfinite(normal_quantile(0.0))
    assert np.isfinite(normal_quantile(1.0))
    assert normal_quantile(0.0) == normal_quantile(1e-12)


def test_cdf_accuracy_on_interval():
    xs = np.linspace(-8, 8, 1601)
    for x in xs[::40]:
        assert abs(normal_cdf(x) - phi_series(x, terms=120)) < 1e-9


def binom_cdf(k, n, p):
    return sum(math.comb(n, i) * p**i * (1 - p) ** (n - i) for i in range(k + 1))


def _bisect(pred, lo=0.0, hi=1.0, tol=1e-12):
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def test_clopper_pearson_27_of_30_against_binomial_inversion():
    # published-table value for 27/30 at 95%: (0.7347, 0.9789)
    lo, hi = clopper_pearson_interval(27, 30, 0.95)
    assert abs(lo - 0.7347115495) < 1e-9
    assert abs(hi - 0.9788828630) < 1e-9
    # independent oracle: invert the exact binomial tails by bisection
    oracle_lo = _bisect(lambda p: 1 - binom_cdf(26, 30, p) <= 0.025)
    oracle_hi = _bisect(lambda p: binom_cdf(27, 30, p) >= 0.025)
    assert abs(lo - oracle_lo) < 1e-9
    assert abs(hi - oracle_hi) < 1e-9


def test_clopper_pearson_edges():
    assert clopper_pearson_lower(0, 50, 0.05) == 0.0
    assert clopper_pearson_upper(50, 50, 0.05) == 1.0
    assert clopper_pearson_lower(50, 50, 0.05) == pytest.approx(0.05 ** (1 / 50))


def test_clopper_pearson_bounds_bracket_estimate():
    for k, n in [(1, 40), (20, 40), (39, 40)]:
        lo, hi = clopper_pearson_interval(k, n, 0.95)
        assert lo <= k / n <= hi


def test_invalid_counts_rejected():
    with pytest.raises(DomainError):
        clopper_pearson_lower(5, 0, 0.05)
    with pytest.raises(DomainError):
        clopper_pearson_upper(7, 5, 0.05)
