import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ccss import channels
from ccss.channels import FadingLink


def test_db_round_trip():
    for db in (-10.0, 0.0, 4.0, 20.0):
        out = channels.snr_db_roundtrip(db, 2.0)
        assert_allclose(out["rho_db"], db, atol=1e-12)


def test_link_fields_from_snr():
    link = FadingLink.from_snr_db(10.0, 2.0, noise_sigma2=0.5)
    assert_allclose(link.avg_snr, 10.0)
    assert_allclose(link.sigma2, 10.0 * 0.5 / 2.0)
    assert_allclose(link.alpha, link.sigma2 / (link.sigma2 + 0.5))
    assert_allclose(link.omega, 2 * 2.0 * link.sigma2)
    assert_allclose(link.b_coef, math.sqrt(link.sigma2 / (0.5 * link.total_var)))


@pytest.mark.parametrize("m", [0.3, 0.0, -1.0, float("nan")])
def test_rejects_m_below_half(m):
    with pytest.raises(ValueError, match="m must be >= 1/2"):
        FadingLink(m, 1.0)


def test_rejects_bad_scales():
    with pytest.raises(ValueError):
        FadingLink(1.0, 0.0)
    with pytest.raises(ValueError):
        FadingLink(1.0, 1.0, noise_sigma2=-1.0)


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 3.5])
def test_envelope_moments(m):
    link = FadingLink.from_snr_db(3.0, m)
    h = channels.sample_nakagami_envelope(link, np.random.default_rng(3), 400_000)
    p = h**2
    # Nakagami power is gamma: mean omega, variance omega^2 / m
    assert_allclose(p.mean(), link.omega, rtol=0.01)
    assert_allclose(p.var(), link.omega**2 / m, rtol=0.03)


def test_awgn_per_component_variance():
    w = channels.sample_awgn(2.0, np.random.default_rng(1), 200_000)
    assert_allclose([w.real.var(), w.imag.var()], [2.0, 2.0], rtol=0.02)


def test_regime_classification():
    assert channels.complex_regime(FadingLink.from_snr_db(0, 0.5), 10).regime == "hoyt"
    assert channels.complex_regime(FadingLink.from_snr_db(0, 1.0), 10).regime == "rayleigh"
    assert channels.complex_regime(FadingLink.from_snr_db(0, 2.0), 10).regime == "rician"


def test_rician_noncentrality_example():
    # m = 2, 10 dB, N = 20: 2 N rho d / (rho (1 - d) + 1) with d = sqrt(1/2)
    p = channels.complex_regime(FadingLink.from_snr_db(10.0, 2.0), 20)
    d = math.sqrt(0.5)
    assert_allclose(p.mu_z, 2 * 20 * 10 * d / (10 * (1 - d) + 1), rtol=1e-14)
    assert_allclose(p.mu_z, 71.98972, atol=5e-5)
    assert math.isnan(p.b)


def test_noncentrality_ignores_mean_phase():
    link = FadingLink.from_snr_db(7.0, 3.0)
    ref = channels.complex_regime(link, 10)
    for phi in (math.pi / 4, 1.0):
        p = channels.complex_regime(link, 10, phi)
        assert_allclose(p.mu_i**2 + p.mu_q**2, ref.mu_i**2 + ref.mu_q**2, rtol=1e-14)
        assert p.mu_z == ref.mu_z
