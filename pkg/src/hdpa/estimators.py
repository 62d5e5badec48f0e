"""Dimension estimators based on predictor augmentation.

``pa_estimate`` minimises the classical augmentation objective over
``k = 0..K``.  ``hdpa_estimate`` uses eigenvalues of the original data,
debiased with :func:`debias`, to rescale the augmentation-block norms and picks
the index of the most negative successive difference over ``j = 1..K``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateIndexWarning, DomainError
from .mp_dist import MpLaw, bbp_threshold, mp_quantile
from .spectral import (
    COVARIANCE_DIVISOR,
    AugmentedSpectrum,
    RngSeed,
    as_data_matrix,
    augmented_spectrum,
    original_eigenvalues,
)

__all__ = [
    "DEFAULT_K",
    "EstimateReport",
    "pa_objective",
    "pa_estimate",
    "debias",
    "hdpa_statistics",
    "hdpa_estimate",
    "estimate_sigma2",
    "default_K",
]

DEFAULT_K = 30


@dataclass
class EstimateReport:
    d_hat: int
    method: str
    diagnostics: dict[str, list[float]]
    sigma2_used: float
    sigma2_source: str
    K: int
    search_range: tuple[int, int]
    assumption_ok: bool = True
    warnings: list[str] = field(default_factory=list)
    divisor: str = COVARIANCE_DIVISOR

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "d_hat": self.d_hat,
            "K": self.K,
            "search_range": list(self.search_range),
            "sigma2_used": self.sigma2_used,
            "sigma2_source": self.sigma2_source,
            "assumption_ok": self.assumption_ok,
            "warnings": list(self.warnings),
            "divisor": self.divisor,
            "diagnostics": {k: [float(v) for v in vals] for k, vals in self.diagnostics.items()},
        }


def default_K(p: int, n: int) -> int:
    return max(1, min(DEFAULT_K, min(p, n - 2) - 1))


def pa_objective(spec: AugmentedSpectrum, K: int) -> np.ndarray:
    """Augmentation objective ``phi(k)`` for ``k = 0..K``."""
    if K < 0 or len(spec.c_norms) < K or len(spec.eigenvalues) < K + 1:
        raise DomainError(
            f"K={K} needs {K} block norms and {K + 1} eigenvalues; got "
            f"{len(spec.c_norms)} and {len(spec.eigenvalues)}"
        )
    c = np.concatenate([[0.0], spec.c_norms[:K]])
    tau = np.asarray(spec.eigenvalues[: K + 1], dtype=float)
    return np.cumsum(c) + tau / (1.0 + np.cumsum(tau))


def debias(tau, p: int, n: int, sigma2: float):
    """Invert the spike map of the original-data eigenvalues.

    Returns the raw value, which is negative for ``tau`` inside the lower bulk.
    """
    g = p / n
    t = np.asarray(tau, dtype=float)
    centred = t - sigma2 * (1.0 + g)
    out = 0.5 * centred + 0.5 * np.sqrt(np.maximum(centred**2 - 4.0 * sigma2**2 * g, 0.0))
    return float(out) if out.ndim == 0 else out


def hdpa_statistics(orig_eigenvalues, spec: AugmentedSpectrum, sigma2: float, K: int) -> np.ndarray:
    """Corrected statistics ``h[j]`` for ``j = 1..K+1``.

    Debiased eigenvalues are clamped at zero before use.
    """
    tau = np.asarray(orig_eigenvalues, dtype=float)
    if len(tau) < K + 1 or len(spec.c_norms) < K + 1:
        raise DomainError(
            f"K={K} needs {K + 1} original eigenvalues and block norms; got {len(tau)} and {len(spec.c_norms)}"
        )
    f = np.maximum(debias(tau[: K + 1], spec.p, spec.n, sigma2), 0.0)
    ratio = (spec.p + spec.r) / spec.n
    return f * (f + ratio * sigma2) / (f + sigma2) * spec.c_norms[: K + 1]


def _sigma2_with_index(orig_eigenvalues, p: int, n: int, index: int | None) -> tuple[float, int]:
    tau = np.asarray(orig_eigenvalues, dtype=float)
    if len(tau) < p:
        raise DomainError(f"need all {p} eigenvalues, got {len(tau)}")
    j = p // 2 if index is None else int(index)
    if not 1 <= j <= p:
        raise DomainError(f"eigenvalue index {j} outside 1..{p}")
    j_req = j
    floor = 1e-12 * max(tau[0], np.finfo(float).tiny)
    if tau[j - 1] <= floor:
        positive = np.nonzero(tau > floor)[0]
        if positive.size == 0:
            raise DomainError("all eigenvalues vanish")
        j = int(positive[-1]) + 1
    gamma = p / n
    if gamma <= 1:
        denom = mp_quantile(MpLaw(gamma), 1.0 - j / p)
    else:
        q = max(0.0, 1.0 - j / (n - 1))
        denom = gamma * mp_quantile(MpLaw(1.0 / gamma), q)
    if denom <= 0:
        raise DomainError(f"eigenvalue index {j} maps to a zero quantile")
    if j != j_req:
        warnings.warn(
            f"eigenvalue {j_req} is zero; using index {j} for the noise variance",
            DegenerateIndexWarning,
            stacklevel=3,
        )
    return float(tau[j - 1] / denom), j


def estimate_sigma2(orig_eigenvalues, p: int, n: int, index: int | None = None) -> float:
    """Noise variance from one rescaled eigenvalue (default index ``p // 2``)."""
    return _sigma2_with_index(orig_eigenvalues, p, n, index)[0]


def _resolve_sigma2(sigma2, orig, p, n, notes: list[str]) -> tuple[float, str]:
    if isinstance(sigma2, str):
        if sigma2 != "estimate":
            raise DomainError(f"sigma2 must be a positive number or 'estimate', got {sigma2!r}")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            value, _ = _sigma2_with_index(orig, p, n, None)
        notes.extend(str(w.message) for w in caught)
        return value, "estimated"
    value = float(sigma2)
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"sigma2 must be positive, got {sigma2!r}")
    return value, "oracle"


def _argmin(values: np.ndarray) -> int:
    # np.argmin returns the first minimiser, i.e. the smallest index on ties.
    return int(np.argmin(values))


def pa_estimate(
    data,
    r: int,
    sigma2: float | str,
    K: int | None = None,
    seed: RngSeed | None = None,
    *,
    n_aug: int = 1,
    orig_eigenvalues=None,
    spectrum: AugmentedSpectrum | None = None,
) -> EstimateReport:
    """Classical predictor augmentation estimate of the signal dimension.

    ``orig_eigenvalues`` and ``spectrum`` let callers reuse computations; the
    supplied spectrum must come from the same data, ``r`` and noise level.
    """
    x = as_data_matrix(data)
    n, p = x.shape
    K = default_K(p, n) if K is None else int(K)
    limit = min(p, n - 2)
    if K < 1 or K > limit:
        raise DomainError(f"K exceeds p: K={K} must satisfy 1 <= K <= min(p, n-2) = {limit}")
    notes: list[str] = []
    if isinstance(sigma2, str) and orig_eigenvalues is None:
        orig_eigenvalues = original_eigenvalues(x)
    s2, source = _resolve_sigma2(sigma2, orig_eigenvalues, p, n, notes)
    if spectrum is None:
        spectrum = augmented_spectrum(x, r, math.sqrt(s2), K, seed or RngSeed(0), n_aug=n_aug)
    phi = pa_objective(spectrum, K)
    return EstimateReport(
        d_hat=_argmin(phi),
        method="PA",
        diagnostics={"phi": phi.tolist()},
        sigma2_used=s2,
        sigma2_source=source,
        K=K,
        search_range=(0, K),
        warnings=notes,
    )


def hdpa_estimate(
    data,
    r: int,
    sigma2: float | str,
    K: int | None = None,
    seed: RngSeed | None = None,
    *,
    n_aug: int = 1,
    orig_eigenvalues=None,
    spectrum: AugmentedSpectrum | None = None,
) -> EstimateReport:
    """High-dimensional predictor augmentation estimate (search over ``1..K``)."""
    x = as_data_matrix(data)
    n, p = x.shape
    K = default_K(p, n) if K is None else int(K)
    limit = min(p, n - 2) - 1
    if K < 2 or K > limit:
        raise DomainError(f"K exceeds p: K={K} must satisfy 2 <= K <= min(p, n-2) - 1 = {limit}")
    notes = ["search starts at j=1; d=0 is not a candidate"]
    if orig_eigenvalues is None:
        orig_eigenvalues = original_eigenvalues(x)
    orig = np.asarray(orig_eigenvalues, dtype=float)
    s2, source = _resolve_sigma2(sigma2, orig, p, n, notes)
    if spectrum is None:
        spectrum = augmented_spectrum(x, r, math.sqrt(s2), K + 1, seed or RngSeed(0), n_aug=n_aug)
    h = hdpa_statistics(orig, spectrum, s2, K)
    diffs = np.diff(h)
    d_hat = _argmin(diffs) + 1
    f = debias(orig[: K + 1], p, n, s2)
    threshold = bbp_threshold(s2, (p + spectrum.r) / n)
    ok = bool(f[0] > threshold)
    if not ok:
        notes.append(
            f"largest debiased eigenvalue {f[0]:.6g} does not exceed the identifiability threshold {threshold:.6g}"
        )
    return EstimateReport(
        d_hat=d_hat,
        method="HDPA",
        diagnostics={"h": h.tolist(), "h_diff": diffs.tolist(), "debiased": f.tolist()},
        sigma2_used=s2,
        sigma2_source=source,
        K=K,
        search_range=(1, K),
        assumption_ok=ok,
        warnings=notes,
    )
