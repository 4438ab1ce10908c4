"""Fusion-center statistics.

Each SU sends its hard decision ``u`` in {-1, +1} over a fading reporting
hop.  The FC sees the real scalar ``y = u h + g`` with ``h`` a Nakagami
envelope (scale ``sigma_v``) and ``g ~ N(0, sigma_n^2)``.  Conditioned on
``u`` the report density factors as

    P(y | u) = C_m exp(-y^2 / 2 sigma_n^2) H_m(u B y),
    B = sigma_v / (sigma_n sqrt(A)),   A = sigma_v^2 + sigma_n^2,

so every likelihood ratio depends on ``y`` only through ``H_m(+-B y)``.
For m = 1/2, 1, 2 the shape ``H_m`` has an elementary form in terms of the
scaled complementary error function; other m go through the general
1F1 template.  All statistics are carried in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from . import specfun
from .channels import FadingLink

__all__ = [
    "FusionRule",
    "Calibration",
    "report_density",
    "log_report_density",
    "branch_likelihoods",
    "log_branch_ratio",
    "log_lrt_statistic",
    "lrt_statistic",
    "calibrate_lambda",
    "egc_statistic",
    "mrc_weights",
    "mrc_statistic",
    "counting_fuse",
    "sign_count",
    "CLOSED_FORM_M",
    "MIN_TAIL_COUNT",
]

CLOSED_FORM_M = (0.5, 1.0, 2.0)
MIN_TAIL_COUNT = 50
MIN_CALIBRATION_TRIALS = 10_000

_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class FusionRule:
    """Which statistic the FC thresholds.

    ``kind`` is one of ``lrt``, ``egc``, ``mrc`` or ``counting``.  For
    ``counting`` the threshold ``J`` is the number of positive reports
    needed to declare the band busy.
    """

    kind: str
    J: int | None = None

    def __post_init__(self):
        if self.kind not in ("lrt", "egc", "mrc", "counting"):
            raise ValueError(f"unknown fusion rule {self.kind!r}")
        if self.kind == "counting" and (self.J is None or self.J < 0):
            raise ValueError("counting rule needs J >= 0")


# ---------------------------------------------------------------------------
# Shape functions
# ---------------------------------------------------------------------------


def _log_e(s: np.ndarray) -> np.ndarray:
    """log erfcx(-s / sqrt 2), stable for all real s."""
    out = np.empty_like(s)
    neg = s <= 0
    out[neg] = np.log(sp.erfcx(-s[neg] / math.sqrt(2.0)))
    pos = ~neg
    sp_ = s[pos]
    out[pos] = 0.5 * sp_ * sp_ + math.log(2.0) + sp.log_ndtr(sp_)
    return out


# Left of this point the elementary shapes lose digits to cancellation.
_SHAPE_SPLIT = -1.0
_CF_DEPTH = 400


def _log_tail_ratios(v: np.ndarray, n: int) -> np.ndarray:
    """log(I_n(v) / I_0(v)) for v > 0, where I_n(v) = int_0^inf t^n e^{-vt - t^2/2} dt.

    The ratios r_k = I_k / I_{k-1} satisfy r_k = k / (v + r_{k+1}), a
    continued fraction that is evaluated backward from a fixed depth.
    """
    r = np.zeros_like(v)
    out = np.zeros_like(v)
    ratios = {}
    for k in range(_CF_DEPTH, 0, -1):
        r = k / (v + r)
        if k <= n:
            ratios[k] = r
    for k in range(1, n + 1):
        out += np.log(ratios[k])
    return out


def _log_shape_closed(s: np.ndarray, m: float) -> np.ndarray:
    le = _log_e(s)
    if m == 0.5:
        return le
    n = 1 if m == 1.0 else 3
    out = np.empty_like(s)
    far = s < _SHAPE_SPLIT
    pos = s > 0
    mid = ~far & ~pos
    with np.errstate(divide="ignore"):
        if m == 1.0:
            sp_ = s[pos]
            out[pos] = np.logaddexp(0.0, np.log(_SQRT_HALF_PI * sp_) + le[pos])
            sm = s[mid]
            out[mid] = np.log1p(_SQRT_HALF_PI * sm * np.exp(le[mid]))
        elif m == 2.0:
            sp_ = s[pos]
            out[pos] = np.logaddexp(np.log(2.0 + sp_ * sp_), np.log(_SQRT_HALF_PI * sp_ * (3.0 + sp_ * sp_)) + le[pos])
            sm = s[mid]
            out[mid] = np.log((2.0 + sm * sm) + _SQRT_HALF_PI * sm * (3.0 + sm * sm) * np.exp(le[mid]))
        else:
            raise ValueError(f"no elementary shape for m={m}")
    # I_0(v) = sqrt(pi/2) erfcx(v / sqrt 2) at v = -s
    v = -s[far]
    out[far] = math.log(_SQRT_HALF_PI) + le[far] + _log_tail_ratios(v, n)
    return out


_LAGUERRE_NODES = 100
_HERMITE_NODES = 80
_TEMPLATE_HIGH = 30.0


def _log_tail_integral_quad(v: np.ndarray, n: float) -> np.ndarray:
    """log I_n(v) for v > 0 by generalized Gauss-Laguerre quadrature."""
    x, w = sp.roots_genlaguerre(_LAGUERRE_NODES, n)
    vals = np.exp(-np.square(x[None, :]) / (2.0 * np.square(v[:, None]))) @ w
    return -(n + 1.0) * np.log(v) + np.log(vals)


def _log_tail_integral_shifted(s: np.ndarray, n: float) -> np.ndarray:
    """log I_n(-s) for large positive s: e^{s^2/2} int (s+z)^n e^{-z^2/2} dz."""
    x, w = sp.roots_hermite(_HERMITE_NODES)
    z = math.sqrt(2.0) * x[None, :]
    base = np.clip(s[:, None] + z, 0.0, None) ** n
    return 0.5 * s * s + np.log(math.sqrt(2.0) * (base @ w))


def _log_shape_template(s: np.ndarray, m: float) -> np.ndarray:
    """log of Gamma(m) 1F1(m; 1/2; s^2/2) + sqrt2 s Gamma(m+1/2) 1F1(m+1/2; 3/2; s^2/2).

    The series is summed near the origin.  Far to the left it is replaced by
    the equal integral 2^{1-m} I_{2m-1}(-s) evaluated by quadrature, and far
    to the right by a shifted Gauss-Hermite rule, since the two hypergeometric
    terms either cancel or overflow there.
    """
    out = np.empty_like(s)
    far = s < _SHAPE_SPLIT
    high = s > _TEMPLATE_HIGH
    mid = ~far & ~high
    shift = (1.0 - m) * math.log(2.0)
    if np.any(far):
        out[far] = shift + _log_tail_integral_quad(-s[far], 2.0 * m - 1.0)
    if np.any(high):
        out[high] = shift + _log_tail_integral_shifted(s[high], 2.0 * m - 1.0)
    g1 = math.gamma(m)
    g2 = math.gamma(m + 0.5)
    idx = np.flatnonzero(mid)
    for i in idx:
        si = float(s.flat[i])
        z = 0.5 * si * si
        a = g1 * specfun.kummer_1f1(m, 0.5, z).value
        b = math.sqrt(2.0) * si * g2 * specfun.kummer_1f1(m + 0.5, 1.5, z).value
        out.flat[i] = math.log(a + b)
    return out


def _log_const(link: FadingLink, route: str) -> float:
    """log C_m so that P(y|u) = C_m exp(-y^2/2 sn2) H_m(u B y)."""
    m = link.m
    sn2, A = link.noise_sigma2, link.total_var
    if route == "closed":
        if m == 0.5:
            return -0.5 * math.log(2.0 * math.pi * A)
        if m == 1.0:
            return 0.5 * math.log(sn2) - math.log(A) - 0.5 * math.log(2.0 * math.pi)
        if m == 2.0:
            return 1.5 * math.log(sn2) - math.log(2.0) - 2.0 * math.log(A) - 0.5 * math.log(2.0 * math.pi)
    return m * math.log(sn2 / A) - math.lgamma(m) - 0.5 * math.log(2.0 * math.pi * sn2)


def _resolve_route(link: FadingLink, route: str) -> str:
    if route == "auto":
        return "closed" if link.m in CLOSED_FORM_M else "template"
    if route == "closed" and link.m not in CLOSED_FORM_M:
        raise ValueError(f"no closed form for m={link.m}; use route='template'")
    if route not in ("closed", "template"):
        raise ValueError(f"unknown route {route!r}")
    return route


def _log_shape(s: np.ndarray, link: FadingLink, route: str) -> np.ndarray:
    if route == "closed":
        return _log_shape_closed(s, link.m)
    return _log_shape_template(s, link.m)


# ---------------------------------------------------------------------------
# Report densities
# ---------------------------------------------------------------------------


def log_report_density(y, u: int, link: FadingLink, *, route: str = "auto"):
    """Natural log of P(y | u) for the reporting link."""
    if u not in (-1, 1):
        raise ValueError("u must be -1 or +1")
    route = _resolve_route(link, route)
    yy = np.atleast_1d(np.asarray(y, dtype=float))
    s = u * link.b_coef * yy
    out = _log_const(link, route) - yy * yy / (2.0 * link.noise_sigma2) + _log_shape(s, link, route)
    return out if np.ndim(y) else float(out[0])


def _literal_density(y: np.ndarray, u: int, link: FadingLink) -> np.ndarray:
    sn, sn2, A, B = math.sqrt(link.noise_sigma2), link.noise_sigma2, link.total_var, link.b_coef
    if link.m == 2.0:
        by = B * y
        return (
            sn**3 * by / (2.0 * A * A)
            * (by / _SQRT_2PI * np.exp(-y * y / (2.0 * sn2))
               + u * (2.0 + by * by) * np.exp(-y * y / (2.0 * A)) * specfun.gaussian_q(-u * by))
        )
    if link.m == 0.5:
        arg = y * u / np.sqrt(2.0 * sn2 * A)
        return (
            np.sqrt(sn2 / A) * np.exp(-y * y / (2.0 * A)) / math.sqrt(2.0 * math.pi * sn2)
            * (1.0 + math.sqrt(sn2 / 2.0) * sp.erf(arg))
        )
    raise ValueError("literal densities exist only for m = 2 and m = 1/2")


def report_density(y, u: int, link: FadingLink, *, route: str = "auto", literal: bool = False):
    """Conditional density P(y | u) of the FC observation.

    ``route`` picks the elementary closed form (``"closed"``, m in
    {1/2, 1, 2}) or the general 1F1 template (``"template"``); ``"auto"``
    prefers the closed form.  ``literal=True`` returns the alternative
    m = 2 and m = 1/2 expressions that are kept for comparison only; they
    are not probability densities.
    """
    if literal:
        yy = np.atleast_1d(np.asarray(y, dtype=float))
        out = _literal_density(yy, u, link)
        return out if np.ndim(y) else float(out[0])
    out = np.exp(log_report_density(y, u, link, route=route))
    return out


def branch_likelihoods(y, pd: float, pf: float, link: FadingLink, *, route: str = "auto"):
    """Per-branch likelihoods (P(y|H0), P(y|H1)) of one report."""
    lm = log_report_density(y, -1, link, route=route)
    lp = log_report_density(y, +1, link, route=route)
    h0 = _mix(lm, lp, pf)
    h1 = _mix(lm, lp, pd)
    return np.exp(h0), np.exp(h1)


def _mix(log_minus, log_plus, p):
    """log((1 - p) e^{log_minus} + p e^{log_plus}) without underflow."""
    with np.errstate(divide="ignore"):
        return np.logaddexp(np.log1p(-p) + log_minus, math.log(p) + log_plus) if p > 0 else np.asarray(log_minus) + 0.0


# ---------------------------------------------------------------------------
# LRT
# ---------------------------------------------------------------------------


def _literal_log_ratio(y: np.ndarray, pd: float, pf: float, link: FadingLink) -> np.ndarray:
    sn2, A, B = link.noise_sigma2, link.total_var, link.b_coef
    by = B * y
    if link.m == 2.0:
        r = 2.0 + by * by

        def part(p):
            return by * np.exp(-y * y / (2.0 * sn2)) + (p - specfun.gaussian_q(by)) * _SQRT_2PI * r * np.exp(-y * y / (2.0 * A))

    elif link.m == 0.5:
        c = math.sqrt(sn2 / 2.0)
        e = sp.erf(y / np.sqrt(2.0 * sn2 * A))

        def part(p):
            return (1.0 - p) * (1.0 - c * e) + p * (1.0 + c * e)

    elif link.m == 1.0:

        def part(p):
            return np.exp(-y * y / (2.0 * sn2)) + (p - specfun.gaussian_q(by)) * _SQRT_2PI * by * np.exp(-y * y / (2.0 * A))

    else:
        raise ValueError("printed ratios exist only for m in {1/2, 1, 2}")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(part(pd) / part(pf))


def log_branch_ratio(y, pd: float, pf: float, link: FadingLink, *, route: str = "auto", literal: bool = False):
    """log P(y|H1) / P(y|H0) for one branch, vectorised over ``y``.

    The constant and Gaussian factors of the report density cancel, so only
    the shape function enters.  ``literal=True`` evaluates the printed
    per-branch ratios directly (the m = 2 and m = 1/2 versions can be
    negative, which yields NaN).
    """
    yy = np.atleast_1d(np.asarray(y, dtype=float))
    if literal:
        out = _literal_log_ratio(yy, pd, pf, link)
        return out if np.ndim(y) else float(out[0])
    route = _resolve_route(link, route)
    s = link.b_coef * yy
    lp = _log_shape(s, link, route)
    lm = _log_shape(-s, link, route)
    out = _mix(lm, lp, pd) - _mix(lm, lp, pf)
    return out if np.ndim(y) else float(out[0])


def log_lrt_statistic(y, pd, pf, links, *, route: str = "auto", literal: bool = False):
    """log L for one or many report vectors.

    ``y`` has shape (K,) or (trials, K); ``pd``, ``pf`` and ``links`` are
    per-SU sequences of length K.
    """
    yy = np.asarray(y, dtype=float)
    single = yy.ndim == 1
    yy = np.atleast_2d(yy)
    K = yy.shape[1]
    if not (len(pd) == len(pf) == len(links) == K):
        raise ValueError("pd, pf and links must have one entry per SU")
    total = np.zeros(yy.shape[0])
    for k in range(K):
        total += log_branch_ratio(yy[:, k], float(pd[k]), float(pf[k]), links[k], route=route, literal=literal)
    return float(total[0]) if single else total


def lrt_statistic(y, pd, pf, links, **kw):
    """Likelihood ratio L = prod_k P(y_k|H1) / P(y_k|H0)."""
    return np.exp(log_lrt_statistic(y, pd, pf, links, **kw))


# ---------------------------------------------------------------------------
# Threshold calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    """FC threshold on the log scale with a bootstrap 95% interval."""

    log_lambda: float
    ci_low: float
    ci_high: float
    target_pf: float
    trials: int

    @property
    def lam(self) -> float:
        return math.exp(self.log_lambda)


def _upper_quantile(sorted_stats: np.ndarray, target_pf: float) -> float:
    # exactly round(P_F n) samples lie strictly above the returned value
    n = sorted_stats.size
    k = int(round(target_pf * n))
    k = min(max(k, 1), n - 1)
    return float(sorted_stats[n - k - 1])


def calibrate_lambda(h0_stats, target_pf: float, *, n_boot: int = 200, rng=None) -> Calibration:
    """Empirical (1 - P_F) quantile of a statistic simulated under H0.

    ``h0_stats`` holds one statistic value per H0 trial (log L for the LRT).
    Deciding H1 when the statistic is strictly above the returned threshold
    gives a false-alarm rate of ``target_pf`` on these samples.
    """
    stats = np.sort(np.asarray(h0_stats, dtype=float).ravel())
    n = stats.size
    if not 0.0 < target_pf < 1.0:
        raise ValueError("target P_F must lie in (0, 1)")
    if n < MIN_CALIBRATION_TRIALS:
        raise ValueError(f"calibration needs at least {MIN_CALIBRATION_TRIALS} trials, got {n}")
    if min(target_pf, 1.0 - target_pf) * n < MIN_TAIL_COUNT:
        raise ValueError(
            f"expected tail count {target_pf * n:.1f} is below {MIN_TAIL_COUNT}; increase trials"
        )
    lam = _upper_quantile(stats, target_pf)
    if rng is None:
        rng = np.random.default_rng(0)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        sample = np.sort(stats[rng.integers(0, n, n)])
        boots[b] = _upper_quantile(sample, target_pf)
    lo, hi = np.quantile(boots, [0.025, 0.975])
    return Calibration(lam, float(lo), float(hi), float(target_pf), n)


# ---------------------------------------------------------------------------
# Suboptimal rules
# ---------------------------------------------------------------------------


def egc_statistic(y):
    """Equal-gain combining: plain sum of the reports."""
    return np.sum(np.asarray(y, dtype=float), axis=-1)


def mrc_weights(links) -> np.ndarray:
    """Per-link weights sqrt(alpha_sf), growing with reporting quality."""
    return np.array([math.sqrt(l.alpha) for l in links])


def mrc_statistic(y, weights):
    return np.asarray(y, dtype=float) @ np.asarray(weights, dtype=float)


def sign_count(y):
    """Number of non-negative reports per trial."""
    return np.sum(np.asarray(y) >= 0, axis=-1)


def counting_fuse(u, J: int):
    """J-out-of-K rule on hard decisions: +1 iff at least J are +1."""
    uu = np.asarray(u)
    if J < 0 or J > uu.shape[-1]:
        raise ValueError("J must lie in 0..K")
    busy = np.sum(uu == 1, axis=-1) >= J
    return np.where(busy, 1, -1)
