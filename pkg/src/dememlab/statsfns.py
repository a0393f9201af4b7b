"""Gaussian CDF/quantile and exact binomial confidence bounds.

The quantile-shift certificates need Phi and Phi^{-1} far into the tails,
so everything here is float64 and backed by the Cephes rational
approximations in scipy.special (|error| < 1e-9 over [-8, 8] and far
beyond). The inverse clamps its input to [1e-12, 1 - 1e-12] to avoid
infinities from Monte-Carlo estimates that hit 0 or 1 exactly.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .errors import DomainError

QUANTILE_CLAMP = 1e-12


def normal_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


def normal_quantile(p):
    """Inverse standard normal CDF, input clamped to [1e-12, 1 - 1e-12]."""
    p = np.clip(p, QUANTILE_CLAMP, 1.0 - QUANTILE_CLAMP)
    return special.ndtri(p)


def _check_counts(successes: int, trials: int):
    if trials <= 0:
        raise DomainError(f"trials must be positive, got {trials}")
    if not 0 <= successes <= trials:
        raise DomainError(f"successes {successes} outside [0, {trials}]")


def clopper_pearson_lower(successes: int, trials: int, alpha: float) -> float:
    """One-sided lower bound: Pr[p >= bound] >= 1 - alpha."""
    _check_counts(successes, trials)
    if successes == 0:
        return 0.0
    from scipy.stats import beta

    return float(beta.ppf(alpha, successes, trials - successes + 1))


def clopper_pearson_upper(successes: int, trials: int, alpha: float) -> float:
    """One-sided upper bound: Pr[p <= bound] >= 1 - alpha."""
    _check_counts(successes, trials)
    if successes == trials:
        return 1.0
    from scipy.stats import beta

    return float(beta.ppf(1.0 - alpha, successes + 1, trials - successes))


def clopper_pearson_interval(
    successes: int, trials: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Two-sided exact binomial interval at the given confidence."""
    if not 0 < confidence < 1:
        raise DomainError(f"confidence must be in (0,1), got {confidence}")
    alpha = (1.0 - confidence) / 2.0
    return (
        clopper_pearson_lower(successes, trials, alpha),
        clopper_pearson_upper(successes, trials, alpha),
    )
