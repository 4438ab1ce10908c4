"""System-level closed forms for sign-quantized reports and identical detectors.

The FC counts ``K1``, the number of non-negative reports, and declares the
band busy when ``K1`` reaches a threshold.  With success probabilities
``p1 = P(y >= 0 | H1)`` and ``p0 = P(y >= 0 | H0)`` the count is binomial,
so P_D and P_F are binomial upper tails and the error sum
``P_M + P_F`` is minimised by the count threshold ``ceil(K / (1 + beta))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import fusion
from .channels import FadingLink

__all__ = [
    "SuccessProbs",
    "SystemOperatingPoint",
    "report_positive_prob",
    "success_probs",
    "success_probs_m1",
    "success_probs_m2",
    "binomial_upper_tail",
    "system_pd",
    "system_pf",
    "poisson_binomial_upper_tail",
    "total_error",
    "error_gap",
    "optimal_l",
    "beta",
    "operating_point",
]


@dataclass(frozen=True)
class SuccessProbs:
    p1: float
    p0: float
    m: float


@dataclass(frozen=True)
class SystemOperatingPoint:
    K: int
    K1: int
    P_D: float
    P_F: float

    @property
    def P_M(self) -> float:
        return 1.0 - self.P_D

    @property
    def P_TOT(self) -> float:
        return self.P_M + self.P_F


def report_positive_prob(link: FadingLink) -> float:
    """c = P(y >= 0 | u = +1) for the reporting link, by quadrature."""

    def dens(y):
        return float(fusion.report_density(y, +1, link))

    # the density mass sits within a few noise widths of the envelope mean
    scale = math.sqrt(link.total_var)
    neg, _ = integrate.quad(dens, -np.inf, 0.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    pos_a, _ = integrate.quad(dens, 0.0, 8.0 * scale, epsabs=1e-13, epsrel=1e-12, limit=200)
    pos_b, _ = integrate.quad(dens, 8.0 * scale, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    pos = pos_a + pos_b
    # normalise away the quadrature error on the total mass
    return pos / (pos + neg)


def success_probs(pd: float, pf: float, link: FadingLink) -> SuccessProbs:
    """p1 and p0 for any m by numerical integration of the report density.

    By symmetry P(y >= 0 | u = -1) = 1 - c, so
    ``p = 1/2 + (q - 1/2)(2c - 1)`` for q in {pd, pf}.
    """
    c = report_positive_prob(link)
    g = 2.0 * c - 1.0
    return SuccessProbs(0.5 + (pd - 0.5) * g, 0.5 + (pf - 0.5) * g, link.m)


def success_probs_m1(pd: float, pf: float, link: FadingLink) -> SuccessProbs:
    """Rayleigh reporting links: the slope 2c - 1 equals sqrt(alpha)."""
    if link.m != 1.0:
        raise ValueError("success_probs_m1 needs m = 1")
    g = math.sqrt(link.alpha)
    return SuccessProbs(0.5 + (pd - 0.5) * g, 0.5 + (pf - 0.5) * g, 1.0)


def success_probs_m2(pd: float, pf: float, link: FadingLink, *, literal: bool = False) -> SuccessProbs:
    """m = 2 reporting links.

    The default integrates the m = 2 report density.  ``literal=True``
    returns ``sv^2/A^2 (sv^2/(2 sn) + sn) + (q - 1/2) sv / (sn sqrt A)``,
    whose first term carries units and does not reduce to 1/2 at q = 1/2.
    """
    if link.m != 2.0:
        raise ValueError("success_probs_m2 needs m = 2")
    if not literal:
        return success_probs(pd, pf, link)
    sv2, sn = link.sigma2, math.sqrt(link.noise_sigma2)
    A = link.total_var
    first = sv2 / A**2 * (sv2 / (2.0 * sn) + sn)
    slope = math.sqrt(sv2) / (sn * math.sqrt(A))
    return SuccessProbs(first + (pd - 0.5) * slope, first + (pf - 0.5) * slope, 2.0)


# ---------------------------------------------------------------------------
# Binomial tails
# ---------------------------------------------------------------------------


def _log_binom_pmf(K: int, j: int, p: float) -> float:
    if p == 0.0:
        return 0.0 if j == 0 else -math.inf
    if p == 1.0:
        return 0.0 if j == K else -math.inf
    return (
        math.lgamma(K + 1.0) - math.lgamma(j + 1.0) - math.lgamma(K - j + 1.0)
        + j * math.log(p) + (K - j) * math.log1p(-p)
    )


def binomial_upper_tail(K: int, K1: int, p: float) -> float:
    """sum_{j >= K1} C(K, j) p^j (1-p)^{K-j}, summed over the smaller tail."""
    if K < 0 or int(K) != K:
        raise ValueError("K must be a non-negative integer")
    if K1 < 0 or K1 > K:
        raise ValueError(f"K1 must lie in 0..{K}, got {K1}")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be a probability")
    if K1 == 0:
        return 1.0
    upper = range(K1, K + 1)
    lower = range(0, K1)
    # the tail containing fewer terms around the mean is the smaller one
    if K1 > K * p:
        return min(1.0, math.fsum(math.exp(_log_binom_pmf(K, j, p)) for j in upper))
    return max(0.0, 1.0 - math.fsum(math.exp(_log_binom_pmf(K, j, p)) for j in lower))


def system_pd(K: int, K1: int, p1: float) -> float:
    return binomial_upper_tail(K, K1, p1)


def system_pf(K: int, K1: int, p0: float) -> float:
    return binomial_upper_tail(K, K1, p0)


def poisson_binomial_upper_tail(ps, K1: int) -> float:
    """P(sum of independent Bernoulli(p_k) >= K1), for non-identical SUs."""
    ps = [float(p) for p in ps]
    K = len(ps)
    if K1 < 0 or K1 > K:
        raise ValueError(f"K1 must lie in 0..{K}")
    dist = np.zeros(K + 1)
    dist[0] = 1.0
    for k, p in enumerate(ps, start=1):
        dist[1 : k + 1] = dist[1 : k + 1] * (1.0 - p) + dist[0:k] * p
        dist[0] *= 1.0 - p
    return float(min(1.0, dist[K1:].sum()))


def operating_point(K: int, K1: int, p1: float, p0: float) -> SystemOperatingPoint:
    return SystemOperatingPoint(K, K1, system_pd(K, K1, p1), system_pf(K, K1, p0))


# ---------------------------------------------------------------------------
# Optimal count threshold
# ---------------------------------------------------------------------------


def total_error(K: int, l: int, p1: float, p0: float) -> float:
    """P_M + P_F when the band is declared busy at l or more positive reports."""
    return 1.0 - system_pd(K, l, p1) + system_pf(K, l, p0)


def error_gap(K: int, l: int, p1: float, p0: float) -> float:
    """D(l) = P_M + P_F - 1."""
    return total_error(K, l, p1, p0) - 1.0


def beta(p1: float, p0: float) -> float:
    if not 0.0 < p0 < p1 < 1.0:
        raise ValueError("beta needs 0 < p0 < p1 < 1")
    return math.log(p1 / p0) / math.log((1.0 - p0) / (1.0 - p1))


def optimal_l(K: int, p1: float, p0: float) -> int:
    """ceil(K / (1 + beta)), clamped to [1, K]."""
    if K < 1:
        raise ValueError("K must be positive")
    b = beta(p1, p0)
    ratio = K / (1.0 + b)
    l = math.ceil(ratio)
    # an integral ratio up to rounding noise is its own ceiling
    if abs(ratio - round(ratio)) < 1e-12 * max(1.0, ratio):
        l = int(round(ratio))
    return min(max(l, 1), K)
