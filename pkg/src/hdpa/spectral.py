"""Sample covariance, eigendecomposition and noise augmentation.

The covariance divisor is ``n`` (centered data, ``1/n`` normalisation); see
:data:`COVARIANCE_DIVISOR`.  Random draws use numpy's PCG64 bit generator keyed
by :class:`RngSeed`, with Gaussian variates from numpy's ziggurat sampler.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ContractViolation, DataParseError, DomainError, InsufficientDataError

__all__ = [
    "COVARIANCE_DIVISOR",
    "RngSeed",
    "derive_seed",
    "AugmentedSpectrum",
    "as_data_matrix",
    "sample_covariance",
    "augment",
    "eig_sym",
    "original_eigenvalues",
    "augmented_spectrum",
    "read_matrix_csv",
    "write_matrix_csv",
]

COVARIANCE_DIVISOR = "n"

_MASK64 = (1 << 64) - 1


def derive_seed(*keys: int) -> int:
    """Hash a tuple of non-negative integers into a 64-bit seed."""
    state = np.random.SeedSequence([int(k) & _MASK64 for k in keys]).generate_state(1, np.uint64)
    return int(state[0])


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not (0 <= int(v) <= _MASK64):
                raise DomainError(f"{name} must be a 64-bit unsigned integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, self.stream])))

    def child(self, *keys: int) -> "RngSeed":
        return RngSeed(derive_seed(self.seed, self.stream, *keys), self.stream)

    def with_stream(self, stream: int) -> "RngSeed":
        return RngSeed(self.seed, stream)


@dataclass(frozen=True)
class AugmentedSpectrum:
    """Leading eigenvalues of the augmented covariance and the squared norms
    of the augmentation block of the leading eigenvectors."""

    eigenvalues: np.ndarray
    c_norms: np.ndarray
    x_norms: np.ndarray
    p: int
    r: int
    n: int
    divisor: str = COVARIANCE_DIVISOR


def as_data_matrix(data, *, min_rows: int = 2) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DomainError(f"data must be a 2-D matrix, got shape {x.shape}")
    if x.shape[1] < 1:
        raise DomainError("data must have at least one column")
    if x.shape[0] < min_rows:
        raise InsufficientDataError(f"need at least {min_rows} observations, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise DomainError("data contains non-finite entries")
    return x


def sample_covariance(data) -> np.ndarray:
    x = as_data_matrix(data)
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / x.shape[0]
    return (s + s.T) / 2.0


def augment(data, r: int, sigma: float, seed: RngSeed) -> np.ndarray:
    """Append ``r`` columns of i.i.d. N(0, sigma^2) noise drawn from ``seed``."""
    x = as_data_matrix(data)
    if int(r) != r or r < 1:
        raise DomainError(f"number of augmented columns must be a positive integer, got {r!r}")
    if not (math.isfinite(sigma) and sigma > 0):
        raise DomainError(f"augmentation standard deviation must be positive, got {sigma!r}")
    noise = seed.generator().standard_normal((x.shape[0], int(r)))
    return np.hstack([x, sigma * noise])


def eig_sym(s, k: int | None = None, *, rtol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order.

    With ``k`` given, only the ``k`` leading pairs are computed.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {s.shape}")
    scale = max(np.max(np.abs(s)), np.finfo(float).tiny) if s.size else 1.0
    if np.max(np.abs(s - s.T), initial=0.0) > rtol * scale:
        raise ContractViolation("matrix is not symmetric within tolerance")
    s = (s + s.T) / 2.0
    m = s.shape[0]
    if k is None or k >= m:
        w, v = scipy.linalg.eigh(s)
    else:
        w, v = scipy.linalg.eigh(s, subset_by_index=[m - k, m - 1])
    return w[::-1].copy(), v[:, ::-1].copy()


def _leading_pairs(z: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    # Leading eigenpairs of the centered covariance of z; uses the n x n Gram
    # matrix when there are more columns than rows.
    n, m = z.shape
    zc = z - z.mean(axis=0)
    if m <= n:
        w, v = eig_sym(zc.T @ zc / n, k)
        return np.maximum(w, 0.0), v
    w, u = eig_sym(zc @ zc.T / n, k)
    v = zc.T @ u
    norms = np.linalg.norm(v, axis=0)
    tiny = norms <= 1e-10 * max(norms.max(initial=0.0), 1.0)
    v[:, ~tiny] /= norms[~tiny]
    v[:, tiny] = 0.0
    return np.maximum(w, 0.0), v


def original_eigenvalues(data) -> np.ndarray:
    """All ``p`` eigenvalues of the sample covariance, descending (zero-padded past rank)."""
    x = as_data_matrix(data)
    n, p = x.shape
    xc = x - x.mean(axis=0)
    gram = xc.T @ xc / n if p <= n else xc @ xc.T / n
    w = np.maximum(scipy.linalg.eigvalsh((gram + gram.T) / 2.0)[::-1], 0.0)
    out = np.zeros(p)
    out[: min(p, w.size)] = w[:p]
    return out


def augmented_spectrum(
    data, r: int, sigma: float, J: int, seed: RngSeed, n_aug: int = 1
) -> AugmentedSpectrum:
    """Augment ``data`` and return ``J + 1`` leading eigenvalues with the
    augmentation-block norms of the ``J`` leading eigenvectors.

    ``n_aug > 1`` averages the block norms over independent augmentations;
    eigenvalues always come from the first draw.
    """
    x = as_data_matrix(data)
    n, p = x.shape
    if int(J) != J or J < 1 or J > min(p, n - 1):
        raise DomainError(f"J={J} must satisfy 1 <= J <= min(p, n-1) = {min(p, n - 1)}")
    if n_aug < 1:
        raise DomainError("n_aug must be at least 1")
    J = int(J)
    eigenvalues = None
    c_sum = np.zeros(J)
    x_sum = np.zeros(J)
    for i in range(n_aug):
        z = augment(x, r, sigma, seed if i == 0 else seed.child(i))
        w, v = _leading_pairs(z, J + 1)
        if eigenvalues is None:
            eigenvalues = w
        c_sum += np.sum(v[p:, :J] ** 2, axis=0)
        x_sum += np.sum(v[:p, :J] ** 2, axis=0)
    return AugmentedSpectrum(
        eigenvalues=eigenvalues,
        c_norms=np.clip(c_sum / n_aug, 0.0, 1.0),
        x_norms=np.clip(x_sum / n_aug, 0.0, 1.0),
        p=p,
        r=int(r),
        n=n,
    )


def read_matrix_csv(path) -> np.ndarray:
    """Read a dense comma-separated numeric matrix; a non-numeric first row is
    treated as a header."""
    rows: list[list[float]] = []
    first = True
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append([float(c) for c in row])
                except ValueError:
                    if not first:
                        raise DataParseError(f"{path}:{lineno}: non-numeric entry") from None
                first = False
    except (OSError, UnicodeDecodeError) as exc:
        raise DataParseError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataParseError(f"{path}: no numeric rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DataParseError(f"{path}: rows have unequal lengths")
    x = np.array(rows, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataParseError(f"{path}: non-finite entries")
    return x


def write_matrix_csv(path, x: np.ndarray) -> None:
    x = np.asarray(x, dtype=float)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(x.shape[1])])
        for row in x:
            w.writerow([format(v, ".17g") for v in row])
