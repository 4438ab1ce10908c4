"""Energy-detector analytics at a single secondary user.

The detector sums ``N`` complex samples into ``t = sum |x(n)|^2`` and
declares the band busy when ``t > tau``.  With per-component noise variance
``s2`` the statistic is Gamma(N, 2 s2) under H0, so

    pf = Q(N, tau / (2 s2)),      tau = 2 s2 Q^{-1}(N, pf).

Under H1 the detection probability depends on how the fading enters the
window.  The general-m expression used here (and its m = 1/2, 1, 2
specialisations) integrates the statistic density

    f(t) = M (t/2s2)^N e^{-t/2s2} / (N! 2 s2) 1F1(m; N+1; alpha t / 2 s2),
    M = (1 - alpha)^m,

which is a negative-binomial(m, alpha) mixture of Gamma(N + 1 + i, 2 s2)
laws.  The complex-regime models instead approximate the faded signal by a
complex Gaussian per sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import specfun
from .channels import FadingLink, complex_regime

__all__ = [
    "DetectorSpec",
    "LocalOperatingPoint",
    "RocCurve",
    "SeriesError",
    "pf_from_threshold",
    "threshold_from_pf",
    "pd_general_m",
    "pd_m_one",
    "pd_m_two",
    "pd_m_half",
    "pd_complex_regime",
    "pd_closed",
    "local_pd",
    "local_roc",
    "local_croc",
    "MODELS",
]

CLAMP_FLAG_TOL = 1e-6
MODELS = ("phi2", "closed", "complex")


class SeriesError(ArithmeticError):
    """A series failed to converge; ``best`` holds the last partial estimate."""

    def __init__(self, message: str, best: float):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class DetectorSpec:
    """Energy detector with ``N`` complex samples and threshold ``tau``."""

    N: int
    target_pf: float
    tau: float
    noise_sigma2: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not self.tau >= 0:
            raise ValueError("tau must be non-negative")
        if not self.noise_sigma2 > 0:
            raise ValueError("noise_sigma2 must be positive")

    @classmethod
    def from_pf(cls, N: int, pf: float, noise_sigma2: float = 1.0) -> "DetectorSpec":
        return cls(int(N), float(pf), threshold_from_pf(N, noise_sigma2, pf), noise_sigma2)

    @property
    def x(self) -> float:
        """Normalised threshold tau / (2 s2)."""
        return self.tau / (2.0 * self.noise_sigma2)


@dataclass(frozen=True)
class LocalOperatingPoint:
    pf: float
    pd: float
    model: str
    clamped: bool = False

    @property
    def pm(self) -> float:
        return 1.0 - self.pd


@dataclass(frozen=True)
class RocCurve:
    """Ordered (false alarm, detection) pairs with their provenance.

    ``ci95`` holds Monte Carlo half-widths when the curve is an estimate.
    A complementary curve (CROC) reports ``miss`` on its vertical axis.
    """

    false_alarm: np.ndarray
    detection: np.ndarray
    provenance: str
    ci95: np.ndarray | None = None
    complementary: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def miss(self) -> np.ndarray:
        return 1.0 - self.detection

    @property
    def vertical(self) -> np.ndarray:
        return self.miss if self.complementary else self.detection


# ---------------------------------------------------------------------------
# H0 side
# ---------------------------------------------------------------------------


def pf_from_threshold(N: int, noise_sigma2: float, tau: float) -> float:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return specfun.reg_upper_gamma(N, tau / (2.0 * noise_sigma2))


def threshold_from_pf(N: int, noise_sigma2: float, pf: float) -> float:
    if not 0.0 < pf < 1.0:
        raise specfun.DomainError(f"pf must lie in (0, 1), got {pf!r}")
    return 2.0 * noise_sigma2 * specfun.inv_reg_upper_gamma(N, pf)


# ---------------------------------------------------------------------------
# H1 side
# ---------------------------------------------------------------------------


def _check_noise(link: FadingLink, spec: DetectorSpec) -> None:
    if not math.isclose(link.noise_sigma2, spec.noise_sigma2, rel_tol=1e-12):
        raise ValueError("link and detector disagree on the noise variance")


def _point(spec: DetectorSpec, pd: float, model: str) -> LocalOperatingPoint:
    clipped = min(1.0, max(0.0, pd))
    return LocalOperatingPoint(spec.target_pf, clipped, model, abs(clipped - pd) > CLAMP_FLAG_TOL)


def _scaled_lower(a: float, alpha: float, x: float) -> float:
    """alpha^{-a} P(a, alpha x), continuous at alpha = 0."""
    if alpha == 0.0:
        return math.exp(a * math.log(x) - math.lgamma(a + 1.0)) if x > 0 else 0.0
    return specfun.reg_lower_gamma(a, alpha * x) * math.exp(-a * math.log(alpha))


def pd_general_m(link: FadingLink, spec: DetectorSpec, *, literal: bool = False) -> LocalOperatingPoint:
    """Detection probability for any m >= 1/2 through Humbert's Phi_2.

    The distribution function of the mixture is
    ``M x^{N+1} e^{-x} / (N+1)! * Phi_2(m, 1; N+2; alpha x, x)``.
    ``literal=True`` evaluates the variant with ``N!`` and lower parameter
    ``N+1``; that variant is not a distribution function (it exceeds one
    for moderate thresholds) and is kept only for comparison.
    """
    _check_noise(link, spec)
    x = spec.x
    model = "phi2_general_literal" if literal else "phi2_general"
    if x == 0.0:
        return _point(spec, 1.0, model)
    m, alpha, N = link.m, link.alpha, spec.N
    shift = 0 if literal else 1
    res = specfun.humbert_phi2(m, 1.0, N + 1.0 + shift, alpha * x, x)
    log_pref = m * math.log1p(-alpha) + (N + 1) * math.log(x) - x - math.lgamma(N + 1.0 + shift)
    if not (res.value > 0 and math.isfinite(res.value)):
        raise SeriesError("Phi_2 evaluation is not finite and positive", math.nan)
    cdf = math.exp(log_pref + math.log(res.value))
    if not res.converged:
        raise SeriesError("Phi_2 series did not converge", 1.0 - cdf)
    if literal:
        pd = 1.0 - cdf
        return LocalOperatingPoint(spec.target_pf, pd, model, not 0.0 <= pd <= 1.0)
    return _point(spec, 1.0 - cdf, model)


def pd_m_one(link: FadingLink, spec: DetectorSpec) -> LocalOperatingPoint:
    """Closed form for Rayleigh fading (m = 1)."""
    if link.m != 1.0:
        raise ValueError("pd_m_one needs m = 1")
    _check_noise(link, spec)
    x, N, alpha = spec.x, spec.N, link.alpha
    if x == 0.0:
        return _point(spec, 1.0, "m_one")
    y = x * (1.0 - alpha)  # tau / (2 A)
    pd = 1.0 - specfun.reg_lower_gamma(N, x) + math.exp(-y) * _scaled_lower(N, alpha, x)
    return _point(spec, pd, "m_one")


def pd_m_two(link: FadingLink, spec: DetectorSpec, *, literal: bool = False) -> LocalOperatingPoint:
    """Closed form for m = 2.

    The default evaluates the three-term expression whose last bracket is
    ``-(N - 1)(1 - alpha) e^{-y} alpha^{-N} P(N, alpha x)``; it equals the
    Phi_2 route exactly.  ``literal=True`` keeps an extra additive
    ``(N - 1)(1 - alpha)`` inside that bracket, which overshoots.
    """
    if link.m != 2.0:
        raise ValueError("pd_m_two needs m = 2")
    if spec.N < 2:
        raise specfun.DomainError("pd_m_two needs N >= 2")
    _check_noise(link, spec)
    x, N, alpha = spec.x, spec.N, link.alpha
    model = "m_two_literal" if literal else "m_two"
    if x == 0.0:
        return _point(spec, 1.0, model)
    y = x * (1.0 - alpha)
    ey = math.exp(-y)
    pd = (
        1.0
        - specfun.reg_lower_gamma(N - 1, x)
        + ey * _scaled_lower(N - 1, alpha, x) * (1.0 + y)
        - (N - 1) * (1.0 - alpha) * ey * _scaled_lower(N, alpha, x)
    )
    if literal:
        pd += (N - 1) * (1.0 - alpha)
    return _point(spec, pd, model)


def _density_cdf(m: float, alpha: float, N: int, x: float) -> float:
    """Quadrature of the normalised statistic density over [0, x]."""
    log_m = m * math.log1p(-alpha) - math.lgamma(N + 1.0)

    def f(u: float) -> float:
        if u <= 0.0:
            return 0.0
        k = specfun.kummer_1f1(m, N + 1.0, alpha * u).value
        return math.exp(log_m + N * math.log(u) - u) * k

    # split at the mode to help the adaptive rule
    mode = min(x, float(N))
    a, _ = integrate.quad(f, 0.0, mode, epsabs=1e-13, epsrel=1e-11, limit=200)
    b = 0.0
    if x > mode:
        b, _ = integrate.quad(f, mode, x, epsabs=1e-13, epsrel=1e-11, limit=200)
    return a + b


def pd_m_half(link: FadingLink, spec: DetectorSpec, *, literal: bool = False) -> LocalOperatingPoint:
    """Detection probability for one-sided Gaussian fading (m = 1/2).

    The default integrates the statistic density numerically.  With
    ``literal=True`` the one-line expression
    ``1 - (2A)^N P(N, tau / 2A)`` is returned instead; its prefactor is not
    dimensionless and the result generally leaves [0, 1].
    """
    if link.m != 0.5:
        raise ValueError("pd_m_half needs m = 1/2")
    _check_noise(link, spec)
    x, N = spec.x, spec.N
    if x == 0.0:
        return _point(spec, 1.0, "m_half")
    if literal:
        two_a = 2.0 * link.total_var
        pd = 1.0 - two_a**N * specfun.reg_lower_gamma(N, spec.tau / two_a)
        # no clamping: the point is to expose the raw value
        return LocalOperatingPoint(spec.target_pf, pd, "m_half_literal", not 0.0 <= pd <= 1.0)
    return _point(spec, 1.0 - _density_cdf(0.5, link.alpha, N, x), "m_half")


def _gamma_sum_sf(shape: float, theta_a: float, theta_b: float, tau: float) -> float:
    """P(G_a + G_b > tau) for independent Gamma(shape, theta) laws.

    Writes the larger-scale law as a negative-binomial mixture of gammas on
    the smaller scale, giving a positive series of upper gamma tails.
    """
    lo, hi = min(theta_a, theta_b), max(theta_a, theta_b)
    r = lo / hi
    z = tau / lo
    w = math.exp(shape * math.log(r))
    total = 0.0
    mass = 0.0
    k = 0
    while k < specfun.SERIES_CAP:
        total += w * specfun.reg_upper_gamma(2.0 * shape + k, z)
        mass += w
        if 1.0 - mass < 1e-15:
            break
        w *= (shape + k) * (1.0 - r) / (k + 1.0)
        k += 1
        if w == 0.0:
            break
    return total


def pd_complex_regime(
    link: FadingLink, spec: DetectorSpec, *, literal: bool = False
) -> LocalOperatingPoint:
    """Detection probability under the complex-Gaussian approximation.

    Hoyt (1/2 <= m < 1): the statistic is the sum of two independent
    chi-square(N) energies with different scales.  The default evaluates the
    tail of that sum exactly; ``literal=True`` instead returns
    ``1 - P(N/2, tau/c1) - P(N/2, tau/c2)``, which treats the two energies
    as if their distribution functions added.

    Rayleigh (m = 1): 1 - P(N, tau / 2A).
    Rician (m > 1): generalized Marcum Q with the regime non-centrality.
    """
    _check_noise(link, spec)
    p = complex_regime(link, spec.N)
    s2 = spec.noise_sigma2
    tau = spec.tau
    if tau == 0.0:
        return _point(spec, 1.0, "complex_regime")
    if p.regime == "hoyt":
        c1 = p.omega_z * (1.0 + p.b) + 2.0 * s2
        c2 = p.omega_z * (1.0 - p.b) + 2.0 * s2
        if literal:
            pd = (
                1.0
                - specfun.reg_lower_gamma(spec.N / 2.0, tau / c1)
                - specfun.reg_lower_gamma(spec.N / 2.0, tau / c2)
            )
            return LocalOperatingPoint(spec.target_pf, pd, "complex_regime_literal", not 0.0 <= pd <= 1.0)
        pd = _gamma_sum_sf(spec.N / 2.0, c1, c2, tau)
    elif p.regime == "rayleigh":
        pd = specfun.reg_upper_gamma(spec.N, tau / (2.0 * link.total_var))
    else:
        pd = specfun.marcum_q(spec.N, math.sqrt(p.mu_z), math.sqrt(2.0 * tau / (p.omega_s + 2.0 * s2)))
    return _point(spec, pd, "complex_regime")


def pd_closed(link: FadingLink, spec: DetectorSpec) -> LocalOperatingPoint:
    """Dispatch to the m-specific closed form, or Phi_2 for other m."""
    if link.m == 1.0:
        return pd_m_one(link, spec)
    if link.m == 2.0 and spec.N >= 2:
        return pd_m_two(link, spec)
    if link.m == 0.5:
        return pd_m_half(link, spec)
    return pd_general_m(link, spec)


def local_pd(link: FadingLink, spec: DetectorSpec, model: str = "closed") -> LocalOperatingPoint:
    if model == "phi2":
        return pd_general_m(link, spec)
    if model == "closed":
        return pd_closed(link, spec)
    if model == "complex":
        return pd_complex_regime(link, spec)
    raise ValueError(f"unknown analytic model {model!r}; choose from {MODELS}")


def _check_grid(pf_grid) -> np.ndarray:
    grid = np.asarray(pf_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("pf grid must be a non-empty 1-D sequence")
    if np.any(grid <= 0) or np.any(grid >= 1):
        raise ValueError("pf grid values must lie in (0, 1)")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("pf grid must be strictly increasing")
    return grid


def local_roc(link: FadingLink, N: int, model: str, pf_grid) -> RocCurve:
    """Analytic ROC: one threshold and one detection probability per grid point."""
    grid = _check_grid(pf_grid)
    pd = np.empty_like(grid)
    for i, pf in enumerate(grid):
        spec = DetectorSpec.from_pf(N, pf, link.noise_sigma2)
        pd[i] = local_pd(link, spec, model).pd
    return RocCurve(grid, pd, f"analytic:{model}", meta={"m": link.m, "snr_db": link.avg_snr_db, "N": N})


def local_croc(link: FadingLink, N: int, model: str, pf_grid) -> RocCurve:
    """Complementary ROC; the curve's ``vertical`` axis is the miss probability."""
    roc = local_roc(link, N, model, pf_grid)
    return RocCurve(roc.false_alarm, roc.detection, roc.provenance, roc.ci95, True, roc.meta)
