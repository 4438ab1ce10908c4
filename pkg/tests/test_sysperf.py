import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from ccss import sysperf
from ccss.channels import FadingLink

# c = P(h + g >= 0) for a Nakagami envelope h and unit Gaussian g, frozen from
# quadrature of scipy.stats.nakagami pdf times the normal cdf.
POSITIVE_REF = [
    (1.0, 10, 0.9767312946227961),
    (1.0, 0, 0.8535533905932737),
    (2.0, 10, 0.9944717533032748),
    (0.5, 5, 0.8795304550334935),
    (2.5, 3, 0.9488757364358705),
]


@pytest.mark.parametrize("m,snr,ref", POSITIVE_REF)
def test_report_positive_prob(m, snr, ref):
    assert_allclose(sysperf.report_positive_prob(FadingLink.from_snr_db(snr, m)), ref, rtol=1e-12)


def test_rayleigh_slope_is_sqrt_alpha():
    link = FadingLink.from_snr_db(4.0, 1.0)
    a = sysperf.success_probs_m1(0.7, 0.03, link)
    b = sysperf.success_probs(0.7, 0.03, link)
    assert_allclose([a.p1, a.p0], [b.p1, b.p0], rtol=1e-12)
    assert_allclose(a.p1, 0.5 + 0.2 * math.sqrt(link.alpha), rtol=1e-15)


def test_success_probs_limits():
    weak = FadingLink(2.0, 1e-12)
    sp = sysperf.success_probs(0.9, 0.1, weak)
    assert_allclose([sp.p1, sp.p0], [0.5, 0.5], atol=1e-5)
    strong = FadingLink.from_snr_db(60.0, 2.0)
    sp = sysperf.success_probs(0.9, 0.1, strong)
    assert_allclose([sp.p1, sp.p0], [0.9, 0.1], atol=1e-3)


def test_printed_m_two_success_prob_misses_half():
    link = FadingLink.from_snr_db(10.0, 2.0)
    lit = sysperf.success_probs_m2(0.5, 0.5, link, literal=True)
    good = sysperf.success_probs_m2(0.5, 0.5, link)
    assert_allclose(good.p1, 0.5, atol=1e-14)
    assert abs(lit.p1 - 0.5) > 0.01


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 60), st.data(), st.floats(0.0, 1.0))
def test_binomial_tail_against_scipy(K, data, p):
    K1 = data.draw(st.integers(0, K))
    ref = stats.binom.sf(K1 - 1, K, p)
    assert abs(sysperf.binomial_upper_tail(K, K1, p) - ref) <= 1e-13 + 1e-11 * ref


def test_binomial_tail_edges():
    assert sysperf.binomial_upper_tail(10, 0, 0.3) == 1.0
    assert sysperf.binomial_upper_tail(10, 10, 1.0) == 1.0
    assert sysperf.binomial_upper_tail(10, 1, 0.0) == 0.0
    with pytest.raises(ValueError):
        sysperf.binomial_upper_tail(10, 11, 0.5)


def test_poisson_binomial_reduces_to_binomial():
    assert_allclose(sysperf.poisson_binomial_upper_tail([0.3] * 12, 5), sysperf.binomial_upper_tail(12, 5, 0.3), rtol=1e-13)


def test_poisson_binomial_brute_force():
    ps = [0.1, 0.5, 0.8, 0.35]
    total = 0.0
    for bits in range(16):
        picks = [(bits >> i) & 1 for i in range(4)]
        if sum(picks) >= 2:
            total += math.prod(p if b else 1 - p for p, b in zip(ps, picks))
    assert_allclose(sysperf.poisson_binomial_upper_tail(ps, 2), total, rtol=1e-14)


def test_operating_point():
    op = sysperf.operating_point(10, 4, 0.7, 0.1)
    assert_allclose(op.P_M + op.P_D, 1.0)
    assert_allclose(op.P_TOT, sysperf.total_error(10, 4, 0.7, 0.1))
    assert_allclose(sysperf.error_gap(10, 4, 0.7, 0.1), op.P_TOT - 1.0)


def _brute_l(K, p1, p0):
    errs = np.array([sysperf.total_error(K, l, p1, p0) for l in range(1, K + 1)])
    return errs.min(), errs


def test_optimal_l_random_instances():
    rng = np.random.default_rng(42)
    for _ in range(300):
        K = int(rng.integers(1, 51))
        p0, p1 = np.sort(rng.uniform(0.001, 0.999, 2))
        if p1 - p0 < 1e-6:
            continue
        best, errs = _brute_l(K, p1, p0)
        assert errs[sysperf.optimal_l(K, p1, p0) - 1] <= best + 1e-12


def test_beta_definition():
    b = sysperf.beta(0.6, 0.2)
    assert_allclose(b, math.log(3.0) / math.log(0.8 / 0.4))
    with pytest.raises(ValueError):
        sysperf.beta(0.2, 0.6)


def test_symmetric_case_is_majority():
    # p1 = 1 - p0 gives beta = 1, so l = ceil(K / 2)
    assert sysperf.optimal_l(20, 0.8, 0.2) == 10
    assert sysperf.optimal_l(15, 0.8, 0.2) == 8
