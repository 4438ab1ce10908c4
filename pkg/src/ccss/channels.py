"""Nakagami-m fading links, AWGN sampling and the complex-envelope regimes.

A :class:`FadingLink` carries the statistics of one hop.  ``sigma2`` is the
per-component scale of the fading amplitude, so the mean envelope power is
``Omega = 2 m sigma2`` and the average SNR is ``m sigma2 / noise_sigma2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FadingLink",
    "ComplexRegimeParams",
    "db_to_linear",
    "linear_to_db",
    "snr_db_roundtrip",
    "sample_nakagami_envelope",
    "sample_awgn",
    "complex_regime",
]


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0) if np.ndim(db) else 10.0 ** (db / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x) if np.ndim(x) else 10.0 * math.log10(x)


@dataclass(frozen=True)
class FadingLink:
    """Statistics of one fading hop.

    Attributes
    ----------
    m : float
        Nakagami severity, at least 1/2.
    sigma2 : float
        Per-component scale of the fading amplitude.
    noise_sigma2 : float
        Per-component variance of the additive noise.
    """

    m: float
    sigma2: float
    noise_sigma2: float = 1.0

    def __post_init__(self):
        if not (self.m >= 0.5):
            raise ValueError(f"fading severity m must be >= 1/2, got {self.m!r}")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive and finite, got {self.sigma2!r}")
        if not (self.noise_sigma2 > 0 and math.isfinite(self.noise_sigma2)):
            raise ValueError(f"noise_sigma2 must be positive and finite, got {self.noise_sigma2!r}")

    @classmethod
    def from_snr_db(cls, snr_db: float, m: float, noise_sigma2: float = 1.0) -> "FadingLink":
        """Build a link whose average SNR is ``snr_db`` decibels."""
        rho = db_to_linear(float(snr_db))
        return cls(m=float(m), sigma2=rho * noise_sigma2 / m, noise_sigma2=noise_sigma2)

    @property
    def avg_snr(self) -> float:
        return self.m * self.sigma2 / self.noise_sigma2

    @property
    def avg_snr_db(self) -> float:
        return linear_to_db(self.avg_snr)

    @property
    def alpha(self) -> float:
        return self.sigma2 / (self.sigma2 + self.noise_sigma2)

    @property
    def omega(self) -> float:
        """Mean envelope power E[h^2] = 2 m sigma2."""
        return 2.0 * self.m * self.sigma2

    @property
    def total_var(self) -> float:
        """sigma2 + noise_sigma2, written A in the closed forms."""
        return self.sigma2 + self.noise_sigma2

    @property
    def b_coef(self) -> float:
        """sqrt(sigma2) / (sqrt(noise_sigma2) sqrt(A)), written B in the closed forms."""
        return math.sqrt(self.sigma2 / (self.noise_sigma2 * self.total_var))


def snr_db_roundtrip(rho_db: float, m: float, noise_sigma2: float = 1.0) -> dict:
    """Convert a dB SNR into link fields and back.

    Returns a dict with the linear SNR, the implied ``sigma2`` and ``alpha``,
    and the SNR recovered from those fields in dB.
    """
    link = FadingLink.from_snr_db(rho_db, m, noise_sigma2)
    return {
        "avg_snr": link.avg_snr,
        "sigma2": link.sigma2,
        "alpha": link.alpha,
        "rho_db": link.avg_snr_db,
    }


def sample_nakagami_envelope(link: FadingLink, rng: np.random.Generator, size=None):
    """Draw Nakagami-m envelopes as the square root of a gamma power.

    The power has shape ``m`` and mean ``2 m sigma2``.
    """
    power = rng.gamma(shape=link.m, scale=link.omega / link.m, size=size)
    return np.sqrt(power)


def sample_awgn(sigma2: float, rng: np.random.Generator, size=None):
    """Circular complex Gaussian noise with per-component variance ``sigma2``."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    s = math.sqrt(sigma2)
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return s * (re + 1j * im)


@dataclass(frozen=True)
class ComplexRegimeParams:
    """Parameters of the complex-Gaussian approximation of a faded signal.

    Only the fields relevant to ``regime`` are populated; the others are NaN.
    """

    regime: str
    b: float = math.nan
    omega_z: float = math.nan
    omega_s: float = math.nan
    mu_i: float = math.nan
    mu_q: float = math.nan
    mu_z: float = math.nan


def complex_regime(link: FadingLink, N: int, phi: float = 0.0) -> ComplexRegimeParams:
    """Classify ``link`` into the Hoyt, Rayleigh or Rician regime.

    ``phi`` is the Rician mean phase.  Only ``mu_i**2 + mu_q**2`` enters any
    detection probability, so the default of zero loses nothing.
    """
    m = link.m
    omega_z = link.omega
    if m < 1.0:
        return ComplexRegimeParams("hoyt", b=math.sqrt((1.0 - m) / m), omega_z=omega_z)
    if m == 1.0:
        return ComplexRegimeParams("rayleigh", omega_z=omega_z)
    d = math.sqrt((m - 1.0) / m)
    omega_s = 2.0 * link.sigma2 * (m - math.sqrt(m * m - m))
    amp = math.sqrt(omega_z * d)
    rho = link.avg_snr
    mu_z = 2.0 * N * rho * d / (rho * (1.0 - d) + 1.0)
    return ComplexRegimeParams(
        "rician",
        omega_z=omega_z,
        omega_s=omega_s,
        mu_i=amp * math.cos(phi),
        mu_q=amp * math.sin(phi),
        mu_z=mu_z,
    )
