"""Marchenko-Pastur law: density, distribution function, quantiles and spike maps.

All functions treat ``MpLaw(gamma, scale)`` as the law of ``scale * X`` where
``X`` follows the unit-variance Marchenko-Pastur law with ratio ``gamma``.  For
``gamma > 1`` the law carries an atom of mass ``1 - 1/gamma`` at zero; the
atom is included in :func:`mp_cdf` and :func:`mp_quantile` but not in
:func:`mp_pdf`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, IdentifiabilityWarning

__all__ = [
    "MpLaw",
    "mp_pdf",
    "mp_cdf",
    "mp_cdf_quad",
    "mp_mass_quad",
    "mp_quantile",
    "bbp_threshold",
    "spike_forward",
]

_QUANTILE_XTOL = 1e-13


@dataclass(frozen=True)
class MpLaw:
    gamma: float
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise DomainError(f"gamma must be positive and finite, got {self.gamma!r}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise DomainError(f"scale must be positive and finite, got {self.scale!r}")

    @property
    def lower_edge(self) -> float:
        return self.scale * (1.0 - math.sqrt(self.gamma)) ** 2

    @property
    def upper_edge(self) -> float:
        return self.scale * (1.0 + math.sqrt(self.gamma)) ** 2

    @property
    def atom_mass(self) -> float:
        return 1.0 - 1.0 / self.gamma if self.gamma > 1 else 0.0


def _check_finite(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"argument must be finite, got {x!r}")
    return x


def _unit_pdf(gamma: float, x: float) -> float:
    a = (1.0 - math.sqrt(gamma)) ** 2
    b = (1.0 + math.sqrt(gamma)) ** 2
    if x <= a or x >= b or x <= 0.0:
        return 0.0
    return math.sqrt((b - x) * (x - a)) / (2.0 * math.pi * gamma * x)


def mp_pdf(law: MpLaw, x: float) -> float:
    """Density of the continuous part at ``x`` (zero outside the bulk)."""
    x = _check_finite(x)
    return _unit_pdf(law.gamma, x / law.scale) / law.scale


def _unit_cont_cdf(gamma: float, x: float) -> float:
    # Closed-form antiderivative after x = (1+g) - 2 sqrt(g) cos(theta).
    sg = math.sqrt(gamma)
    big_a = 1.0 + gamma
    big_b = 2.0 * sg
    c = min(1.0, max(-1.0, (big_a - x) / big_b))
    theta = math.acos(c)
    val = math.sin(theta) / big_b + big_a * theta / big_b**2
    if gamma != 1.0:
        half = math.tan(theta / 2.0) if theta < math.pi else math.inf
        val -= abs(1.0 - gamma) / (2.0 * gamma) * math.atan((1.0 + sg) / abs(1.0 - sg) * half)
    return 2.0 / math.pi * val


def mp_cdf(law: MpLaw, x: float) -> float:
    """P(X <= x), atom at zero included."""
    x = _check_finite(x) / law.scale
    if x < 0.0:
        return 0.0
    gamma = law.gamma
    atom = 1.0 - 1.0 / gamma if gamma > 1 else 0.0
    a = (1.0 - math.sqrt(gamma)) ** 2
    b = (1.0 + math.sqrt(gamma)) ** 2
    if x <= a:
        return atom
    if x >= b:
        return 1.0
    return min(1.0, max(atom, atom + _unit_cont_cdf(gamma, x)))


def _quad_unit(gamma: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    if lo == 0.0:
        # gamma == 1: density ~ x^{-1/2} at the origin, so integrate in t = sqrt(x).
        val, _ = integrate.quad(
            lambda t: 2.0 * t * _unit_pdf(gamma, t * t),
            0.0, math.sqrt(hi), epsabs=1e-14, epsrel=1e-13, limit=200,
        )
        return val
    val, _ = integrate.quad(
        lambda t: _unit_pdf(gamma, t), lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200,
    )
    return val


def mp_cdf_quad(law: MpLaw, x: float) -> float:
    """Distribution function by adaptive quadrature of :func:`mp_pdf`.

    Slower than :func:`mp_cdf`; kept as an independent reference.
    """
    x = _check_finite(x) / law.scale
    if x < 0.0:
        return 0.0
    a = (1.0 - math.sqrt(law.gamma)) ** 2
    b = (1.0 + math.sqrt(law.gamma)) ** 2
    return law.atom_mass + _quad_unit(law.gamma, a, min(max(x, a), b))


def mp_mass_quad(law: MpLaw) -> float:
    """Total mass of the continuous part, by quadrature."""
    return mp_cdf_quad(law, law.upper_edge) - law.atom_mass


def mp_quantile(law: MpLaw, q: float) -> float:
    """Smallest x with ``mp_cdf(law, x) >= q``."""
    q = float(q)
    if not (0.0 <= q <= 1.0):
        raise DomainError(f"quantile level must lie in [0, 1], got {q!r}")
    gamma = law.gamma
    atom = law.atom_mass
    a = (1.0 - math.sqrt(gamma)) ** 2
    b = (1.0 + math.sqrt(gamma)) ** 2
    if gamma > 1 and q <= atom:
        return 0.0
    if q == 0.0:
        return law.scale * a
    if q == 1.0:
        return law.scale * b
    root = optimize.brentq(
        lambda t: atom + _unit_cont_cdf(gamma, t) - q, a, b,
        xtol=_QUANTILE_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500,
    )
    return law.scale * root


def bbp_threshold(sigma2: float, gamma_total: float) -> float:
    """Smallest identifiable spike size ``sigma2 * sqrt(gamma_total)``."""
    return sigma2 * math.sqrt(gamma_total)


def spike_forward(lam: float, sigma2: float, gamma_total: float) -> float:
    """Limit of the sample eigenvalue belonging to a population spike ``lam``.

    Spikes at or below :func:`bbp_threshold` are still evaluated, with an
    :class:`IdentifiabilityWarning`.
    """
    if not lam > 0:
        raise DomainError(f"spike must be positive, got {lam!r}")
    if gamma_total > 0 and lam <= bbp_threshold(sigma2, gamma_total):
        warnings.warn(
            f"spike {lam} does not exceed the identifiability threshold "
            f"{bbp_threshold(sigma2, gamma_total)}",
            IdentifiabilityWarning,
            stacklevel=2,
        )
    return (lam + sigma2) * (1.0 + gamma_total * sigma2 / lam)
