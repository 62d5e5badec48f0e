"""Probability limits of the augmentation statistics under a spiked model.

Indices ``j`` are 1-based throughout, matching the ordering of sample
eigenvalues.  Fixed noise indices sit at the top edge of the bulk (quantile
level ``q = 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import AssumptionViolation, DomainError
from .mp_dist import MpLaw, bbp_threshold, mp_quantile

__all__ = [
    "SpikedModel",
    "AspectRatios",
    "LimitProfile",
    "cnorm_limit",
    "tau_limit_signal",
    "tau_limit_noise",
    "phi_limit",
    "h_limit",
    "noise_h_limit",
    "h_jump_limit",
    "tuning_limit",
    "limit_profile",
    "phi_gap",
    "phi_gap_identity",
    "boundary_function",
    "inconsistency_boundary",
]


@dataclass(frozen=True)
class SpikedModel:
    lambdas: tuple[float, ...]
    sigma2: float = 1.0

    def __post_init__(self) -> None:
        lams = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", lams)
        if not lams:
            raise DomainError("a spiked model needs at least one spike")
        if any(not (math.isfinite(v) and v > 0) for v in lams):
            raise DomainError("spikes must be positive and finite")
        if any(a <= b for a, b in zip(lams, lams[1:])):
            raise DomainError("spikes must be strictly decreasing")
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise DomainError("sigma2 must be positive")

    @property
    def d(self) -> int:
        return len(self.lambdas)

    def identifiable(self, ratios: "AspectRatios") -> bool:
        return self.lambdas[-1] > bbp_threshold(self.sigma2, ratios.total)


@dataclass(frozen=True)
class AspectRatios:
    gamma_p: float
    gamma_r: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gamma_p) and self.gamma_p >= 0):
            raise DomainError("gamma_p must be non-negative")
        if not (math.isfinite(self.gamma_r) and self.gamma_r > 0):
            raise DomainError("gamma_r must be positive")

    @property
    def total(self) -> float:
        return self.gamma_p + self.gamma_r


@dataclass(frozen=True)
class LimitProfile:
    model: SpikedModel
    ratios: AspectRatios
    c_norm_limits: np.ndarray
    tau_limits_augmented: np.ndarray
    tau_limits_original: np.ndarray
    h_limits: np.ndarray
    phi_limits: np.ndarray


def _require_identifiable(model: SpikedModel, ratios: AspectRatios) -> None:
    if not model.identifiable(ratios):
        raise AssumptionViolation(
            f"smallest spike {model.lambdas[-1]} must exceed "
            f"sigma2*sqrt(gamma_p+gamma_r) = {bbp_threshold(model.sigma2, ratios.total)}"
        )


def _check_index(j: int) -> int:
    if int(j) != j or j < 1:
        raise DomainError(f"index must be a positive integer, got {j!r}")
    return int(j)


def cnorm_limit(model: SpikedModel, ratios: AspectRatios, j: int) -> float:
    """Limit of the augmentation-block norm of the ``j``-th eigenvector."""
    j = _check_index(j)
    _require_identifiable(model, ratios)
    gp, gr = ratios.gamma_p, ratios.gamma_r
    if j > model.d:
        return gr / (gp + gr)
    lam, s2 = model.lambdas[j - 1], model.sigma2
    return gr * s2 / lam * (lam + s2) / (lam + (gp + gr) * s2)


def _spike_limit(lam: float, sigma2: float, gamma: float) -> float:
    return (lam + sigma2) * (1.0 + gamma * sigma2 / lam)


def tau_limit_signal(model: SpikedModel, gamma_total: float, j: int) -> float:
    j = _check_index(j)
    if j > model.d:
        raise DomainError(f"signal index {j} exceeds d={model.d}")
    return _spike_limit(model.lambdas[j - 1], model.sigma2, gamma_total)


def tau_limit_noise(gamma_total: float, sigma2: float, q: float, *, per_total: bool = False) -> float:
    """Limit of a noise eigenvalue at quantile level ``q``.

    By default ``1 - q`` is the limit of ``j/(p+r)`` when ``gamma_total <= 1`` and
    of ``j/(n-1)`` otherwise.  With ``per_total=True`` the level is always taken
    relative to ``p + r``, so indices past the rank map to zero.
    """
    if not gamma_total > 0:
        raise DomainError("gamma_total must be positive")
    if not (0.0 <= q <= 1.0):
        raise DomainError(f"quantile level must lie in [0, 1], got {q!r}")
    if gamma_total <= 1:
        return mp_quantile(MpLaw(gamma_total, sigma2), q)
    if per_total:
        q = 1.0 - (1.0 - q) * gamma_total
        if q < 0:
            return 0.0
    return gamma_total * mp_quantile(MpLaw(1.0 / gamma_total, sigma2), q)


def _tau_augmented(model: SpikedModel, ratios: AspectRatios, j: int) -> float:
    if j <= model.d:
        return tau_limit_signal(model, ratios.total, j)
    return model.sigma2 * (1.0 + math.sqrt(ratios.total)) ** 2


def phi_limit(model: SpikedModel, ratios: AspectRatios, K: int) -> np.ndarray:
    """Limiting augmentation objective at ``k = 0..K``."""
    _require_identifiable(model, ratios)
    if int(K) != K or K < 0:
        raise DomainError("K must be a non-negative integer")
    c = np.array([0.0] + [cnorm_limit(model, ratios, j) for j in range(1, K + 1)])
    tau = np.array([_tau_augmented(model, ratios, j) for j in range(1, K + 2)])
    return np.cumsum(c) + tau / (1.0 + np.cumsum(tau))


def h_limit(model: SpikedModel, ratios: AspectRatios, j: int) -> float:
    """Limit of the corrected statistic at a fixed index ``j``."""
    j = _check_index(j)
    _require_identifiable(model, ratios)
    if j <= model.d:
        return ratios.gamma_r * model.sigma2
    return noise_h_limit(ratios, model.sigma2, 1.0)


def noise_h_limit(ratios: AspectRatios, sigma2: float, q: float) -> float:
    """Limit of the corrected statistic along noise indices at level ``q``.

    Uses the unclamped debiased value, so it is meaningful where the noise
    quantile exceeds ``sigma2 * (1 + gamma_p)``.
    """
    gp, gr = ratios.gamma_p, ratios.gamma_r
    if gp == 0:
        edge = 1.0
    else:
        edge = mp_quantile(MpLaw(gp), q)
    a = edge - 1.0 - gp
    return gr * sigma2 * a * (a + 2 * gp + 2 * gr) / (2 * (gp + gr) * (a + 2))


def h_jump_limit(ratios: AspectRatios, sigma2: float) -> float:
    """Limit of ``h[d+1] - h[d]``; always negative."""
    gp, gr = ratios.gamma_p, ratios.gamma_r
    return -sigma2 * gr**2 / ((math.sqrt(gp) + 1.0) * (gp + gr))


def tuning_limit(gamma_p: float, c: float, sigma2: float) -> float:
    """The jump limit written with ``gamma_r = c * gamma_p``."""
    return -sigma2 * c**2 * gamma_p / ((math.sqrt(gamma_p) + 1.0) * (1.0 + c))


def limit_profile(model: SpikedModel, ratios: AspectRatios, K: int) -> LimitProfile:
    _require_identifiable(model, ratios)
    idx = range(1, K + 2)
    s2 = model.sigma2
    orig_edge = s2 * (1.0 + math.sqrt(ratios.gamma_p)) ** 2
    return LimitProfile(
        model=model,
        ratios=ratios,
        c_norm_limits=np.array([cnorm_limit(model, ratios, j) for j in idx]),
        tau_limits_augmented=np.array([_tau_augmented(model, ratios, j) for j in idx]),
        tau_limits_original=np.array(
            [_spike_limit(model.lambdas[j - 1], s2, ratios.gamma_p) if j <= model.d else orig_edge for j in idx]
        ),
        h_limits=np.array([h_limit(model, ratios, j) for j in idx]),
        phi_limits=phi_limit(model, ratios, K),
    )


def phi_gap(model: SpikedModel, ratios: AspectRatios) -> float:
    """``phi(d) - phi(d+1)`` read off :func:`phi_limit`."""
    phi = phi_limit(model, ratios, model.d + 1)
    return float(phi[model.d] - phi[model.d + 1])


def _signal_sums(model: SpikedModel, gamma_p: float, gamma_r: float) -> tuple[float, float]:
    g = gamma_p + gamma_r
    tau_next = model.sigma2 * (1.0 + math.sqrt(g)) ** 2
    total = sum(_spike_limit(lam, model.sigma2, g) for lam in model.lambdas) + tau_next
    return total, tau_next


def phi_gap_identity(model: SpikedModel, ratios: AspectRatios) -> float:
    """``phi(d) - phi(d+1)`` from the closed two-term identity."""
    gp, gr = ratios.gamma_p, ratios.gamma_r
    total, t = _signal_sums(model, gp, gr)
    return -gr / (gr + gp) + t**2 / ((1.0 + total) * (1.0 + total + t))


def boundary_function(model: SpikedModel, gamma_p: float, gamma_r: float) -> float:
    """Polynomial form of the gap; same sign as ``phi(d) - phi(d+1)``."""
    total, t = _signal_sums(model, gamma_p, gamma_r)
    return -gamma_r * (1.0 + total) * (1.0 + total + t) + (gamma_r + gamma_p) * t**2


def inconsistency_boundary(
    model: SpikedModel, gamma_p: float, *, grid: int = 4000, xtol: float = 1e-10
) -> float | None:
    """Smallest ``gamma_r`` where ``phi(d) = phi(d+1)``, or None when the
    objective prefers ``d+1`` over the whole feasible range."""
    s2 = model.sigma2
    upper = model.lambdas[-1] ** 2 / s2**2 - gamma_p
    if not (gamma_p > 0 and upper > 0):
        raise DomainError(
            f"gamma_p={gamma_p} leaves no feasible gamma_r (need 0 < gamma_p < lambda_d^2/sigma^4)"
        )
    lo, hi = 1e-9, upper - 1e-9
    if hi <= lo:
        return None
    # Scan for the first sign change; geometric spacing resolves roots near zero.
    pts = np.unique(np.concatenate([np.geomspace(lo, hi, grid), np.linspace(lo, hi, grid)]))
    vals = np.array([boundary_function(model, gamma_p, g) for g in pts])
    neg = np.nonzero(vals <= 0)[0]
    if neg.size == 0:
        return None
    i = neg[0]
    if vals[i] == 0:
        return float(pts[i])
    return float(
        optimize.bisect(lambda g: boundary_function(model, gamma_p, g), pts[i - 1], pts[i], xtol=xtol, maxiter=200)
    )
