"""Special functions used by the detection and fusion closed forms.

Everything here is scalar, pure and deterministic.  The incomplete gamma
pair, its inverse, the confluent hypergeometric series, Humbert's Phi_2 and
the generalized Marcum Q are implemented directly; ``math`` supplies the
complete gamma logarithm and the error function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

SERIES_CAP = 10_000
SERIES_RTOL = 1e-15
_STOP_RUN = 3

_GAMMA_EPS = 1e-16
_GAMMA_CF_MAX = 10_000
_TINY = 1e-300


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


@dataclass(frozen=True)
class SeriesResult:
    """Value of a truncated series plus the bookkeeping needed to trust it."""

    value: float
    terms_used: int
    converged: bool
    est_abs_error: float

    def __float__(self) -> float:
        return self.value


def ln_gamma(x: float) -> float:
    if not x > 0:
        raise DomainError(f"ln_gamma needs x > 0, got {x!r}")
    return math.lgamma(x)


def pochhammer(a: float, n: int) -> float:
    """Rising factorial (a)_n = a (a+1) ... (a+n-1)."""
    if n < 0 or int(n) != n:
        raise DomainError(f"pochhammer needs a non-negative integer n, got {n!r}")
    out = 1.0
    for k in range(int(n)):
        out *= a + k
    return out


def erf(x):
    if np.ndim(x):
        return _sp.erf(x)
    return math.erf(x)


def gaussian_q(x):
    """Gaussian tail probability Q(x) = P(Z > x); accepts scalars or arrays."""
    if np.ndim(x):
        return 0.5 * _sp.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return 0.5 * math.erfc(x / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# Incomplete gamma
# ---------------------------------------------------------------------------


def _check_gamma_args(a: float, x: float) -> None:
    if not a > 0:
        raise DomainError(f"incomplete gamma needs a > 0, got a={a!r}")
    if not x >= 0:
        raise DomainError(f"incomplete gamma needs x >= 0, got x={x!r}")


def _log_prefactor(a: float, x: float) -> float:
    # log of x^a e^{-x} / Gamma(a)
    return a * math.log(x) - x - math.lgamma(a)


def _lower_series(a: float, x: float) -> float:
    # P(a,x) = x^a e^-x / Gamma(a+1) * sum x^n / ((a+1)...(a+n))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_GAMMA_CF_MAX):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(_log_prefactor(a, x))


def _upper_cf(a: float, x: float) -> float:
    # Modified Lentz evaluation of the continued fraction for Q(a,x).
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_CF_MAX):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return math.exp(_log_prefactor(a, x)) * h


def reg_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a)."""
    _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _lower_series(a, x))
    return max(0.0, 1.0 - _upper_cf(a, x))


def reg_upper_gamma(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    _check_gamma_args(a, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _lower_series(a, x))
    return min(1.0, _upper_cf(a, x))


def _gamma_log_density(a: float, x: float) -> float:
    return (a - 1.0) * math.log(x) - x - math.lgamma(a)


def inv_reg_upper_gamma(a: float, q: float) -> float:
    """Return x with Q(a, x) = q.

    Brackets by doubling outward from the median approximation, then runs
    Newton steps that fall back to bisection whenever a step leaves the
    bracket.
    """
    if not a > 0:
        raise DomainError(f"inv_reg_upper_gamma needs a > 0, got {a!r}")
    if not 0.0 < q < 1.0:
        raise DomainError(f"inv_reg_upper_gamma needs q in (0, 1), got {q!r}")

    def f(x: float) -> float:
        # Work on whichever tail is smaller to keep relative accuracy.
        if q <= 0.5:
            return reg_upper_gamma(a, x) - q
        return (1.0 - q) - reg_lower_gamma(a, x)

    x0 = max(a - 1.0 / 3.0 + 0.02 / a, 1e-3 * a, 1e-8)
    lo, hi = x0, x0
    if f(x0) > 0:
        while f(hi) > 0:
            lo = hi
            hi *= 2.0
    else:
        while f(lo) < 0 and lo > 1e-300:
            hi = lo
            lo *= 0.5
        if f(lo) < 0:
            return 0.0
    x = 0.5 * (lo + hi)
    for _ in range(200):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx > 0:
            lo = x
        else:
            hi = x
        # d/dx of f is -density in both branches
        dens = math.exp(_gamma_log_density(a, x)) if x > 0 else 0.0
        step_ok = False
        if dens > 0:
            xn = x + fx / dens
            if lo < xn < hi:
                step_ok = True
        if not step_ok:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 1e-15 * max(1.0, abs(x)):
            return xn
        x = xn
    return x


# ---------------------------------------------------------------------------
# Confluent hypergeometric 1F1 and Humbert Phi_2
# ---------------------------------------------------------------------------


def _check_c(c: float, name: str) -> None:
    if c <= 0 and float(c).is_integer():
        raise DomainError(f"{name} must not be a non-positive integer, got {c!r}")


def _finish(total: float, last: float, ratio: float, n_terms: int, stop_met: bool, rtol: float):
    # Once the term ratio is below 1 the tail is dominated by a geometric series.
    tail = abs(last) * ratio / (1.0 - ratio) if ratio < 1.0 else math.inf
    converged = stop_met and tail <= rtol * abs(total)
    return SeriesResult(float(total), n_terms, converged, float(min(tail, abs(last)) if not converged else tail))


def _ascending_1f1(a: float, b: float, x: float, cap: int, rtol: float) -> SeriesResult:
    term = 1.0
    total = 1.0
    small_run = 0
    j = 0
    stop_met = False
    while j < cap:
        term *= (a + j) * x / ((b + j) * (j + 1))
        j += 1
        total += term
        if term == 0.0:
            # a non-positive integer numerator parameter ends the series exactly
            return SeriesResult(float(total), j + 1, True, 0.0)
        if abs(term) < SERIES_RTOL * abs(total):
            small_run += 1
            if small_run >= _STOP_RUN:
                stop_met = True
                break
        else:
            small_run = 0
    ratio = abs((a + j) * x / ((b + j) * (j + 1)))
    return _finish(total, term, ratio, j + 1, stop_met, rtol)


def kummer_1f1(
    a: float,
    b: float,
    x: float,
    *,
    route: str = "auto",
    cap: int = SERIES_CAP,
    rtol: float = 1e-13,
) -> SeriesResult:
    """Confluent hypergeometric function 1F1(a; b; x).

    ``route="auto"`` sums the ascending series for x >= 0.  For x < 0 the
    alternating series cancels badly, so Kummer's transformation
    1F1(a; b; x) = e^x 1F1(b - a; b; -x) is applied instead.  ``"series"`` and
    ``"kummer"`` force one route.
    """
    _check_c(b, "b")
    if x == 0.0:
        return SeriesResult(1.0, 1, True, 0.0)
    if route == "auto":
        route = "kummer" if x < 0.0 else "series"
    if route == "series":
        return _ascending_1f1(a, b, x, cap, rtol)
    if route == "kummer":
        inner = _ascending_1f1(b - a, b, -x, cap, rtol)
        scale = math.exp(x)
        return SeriesResult(
            scale * inner.value, inner.terms_used, inner.converged, scale * inner.est_abs_error
        )
    raise ValueError(f"unknown route {route!r}")


def humbert_phi2(
    b1: float,
    b2: float,
    c: float,
    x: float,
    y: float,
    *,
    cap: int = SERIES_CAP,
    rtol: float = 1e-12,
) -> SeriesResult:
    """Humbert's confluent function Phi_2(b1, b2; c; x, y).

    Summed as the single series
        sum_i (b1)_i x^i / (i! (c)_i) * 1F1(b2; c + i; y),
    which collapses the inner j-sum of the double series into a Kummer
    function.  Coefficients are built by recurrence.
    """
    _check_c(c, "c")
    if x == 0.0:
        return kummer_1f1(b2, c, y, cap=cap, rtol=rtol)

    coef = 1.0
    first = kummer_1f1(b2, c, y, cap=cap, rtol=rtol)
    total = first.value
    inner_err = first.est_abs_error
    inner_ok = first.converged
    small_run = 0
    stop_met = False
    i = 0
    last = total
    while i < cap:
        coef *= (b1 + i) * x / ((i + 1) * (c + i))
        i += 1
        f = kummer_1f1(b2, c + i, y, cap=cap, rtol=rtol)
        inner_ok = inner_ok and f.converged
        last = coef * f.value
        total += last
        inner_err += abs(coef) * f.est_abs_error
        if abs(last) < SERIES_RTOL * abs(total) or last == 0.0:
            small_run += 1
            if small_run >= _STOP_RUN:
                stop_met = True
                break
        else:
            small_run = 0
    # For y >= 0 and b2 > 0 the Kummer factor decreases in i, so the outer
    # coefficient ratio bounds the remaining terms.
    ratio = abs((b1 + i) * x / ((i + 1) * (c + i)))
    outer = _finish(total, last, ratio, i + 1, stop_met, rtol)
    err = outer.est_abs_error + inner_err
    return SeriesResult(outer.value, outer.terms_used, outer.converged and inner_ok and err <= rtol * abs(total), err)


# ---------------------------------------------------------------------------
# Generalized Marcum Q
# ---------------------------------------------------------------------------


def _poisson_logpmf(k: int, lam: float) -> float:
    return k * math.log(lam) - lam - math.lgamma(k + 1.0)


def marcum_q(order: int, a: float, b: float) -> float:
    """Generalized Marcum Q_N(a, b).

    Uses the Poisson mixture Q_N(a, b) = sum_k Pois(k; a^2/2) Q(N + k, b^2/2),
    summed outward from the Poisson mode in both directions until the
    remaining Poisson mass is negligible.
    """
    if order < 1 or int(order) != order:
        raise DomainError(f"marcum_q needs a positive integer order, got {order!r}")
    if a < 0 or b < 0:
        raise DomainError("marcum_q needs non-negative a and b")
    if b == 0.0:
        return 1.0
    half_b2 = 0.5 * b * b
    lam = 0.5 * a * a
    if lam == 0.0:
        return reg_upper_gamma(order, half_b2)
    mode = int(math.floor(lam))
    total = 0.0
    # upward from the mode
    k = mode
    while True:
        w = math.exp(_poisson_logpmf(k, lam))
        total += w * reg_upper_gamma(order + k, half_b2)
        if k > mode and w < 1e-17:
            break
        k += 1
    k = mode - 1
    while k >= 0:
        w = math.exp(_poisson_logpmf(k, lam))
        total += w * reg_upper_gamma(order + k, half_b2)
        if w < 1e-17:
            break
        k -= 1
    return min(1.0, max(0.0, total))
