"""Dense numerical kernel: factorizations, eigen-extremes, correlation helpers.

Matrices are plain 2-D ``numpy`` arrays in C (row-major) order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .errors import InvalidRho, NonFinite, NotPositiveDefinite, ZeroVariance

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class CorrStats:
    max_offdiag_abs: float
    min_eigenvalue: float


def _as_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFinite("matrix contains NaN or Inf")
    return m


def _check_symmetric(m: np.ndarray) -> None:
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("matrix is not symmetric within 1e-10")


def cholesky(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``."""
    m = _as_square(m)
    _check_symmetric(m)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def sym_min_eigen(m, return_vector: bool = False):
    """Smallest eigenvalue of a symmetric matrix (and optionally its eigenvector)."""
    m = _as_square(m)
    _check_symmetric(m)
    w, v = np.linalg.eigh(m)
    if return_vector:
        return float(w[0]), v[:, 0]
    return float(w[0])


def toeplitz_corr(rho: float, k: int) -> np.ndarray:
    """Correlation matrix with entries ``rho**|i-j|``."""
    if not abs(rho) < 1:
        raise InvalidRho(f"|rho| must be < 1, got {rho}")
    if k < 1:
        raise ValueError("k must be >= 1")
    return toeplitz(float(rho) ** np.arange(k))


def standardize(series) -> tuple[np.ndarray, float, float]:
    """Return ``(z, mean, sd)`` with ``z = (series - mean) / sd`` (sd uses T-1)."""
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two observations")
    mean = float(x.mean())
    sd = float(x.std(ddof=1))
    if not sd > 0 or sd <= 1e-14 * max(1.0, abs(mean)):
        raise ZeroVariance("series has zero variance")
    return (x - mean) / sd, mean, sd


def corr_matrix(X) -> np.ndarray:
    """Sample correlation matrix of the rows of ``X`` (n x T)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 3:
        raise ValueError("X must be n x T with T >= 3")
    Xc = X - X.mean(axis=1, keepdims=True)
    ss = np.einsum("ij,ij->i", Xc, Xc)
    if np.any(ss <= 1e-28 * np.maximum(1.0, np.abs(X).max(axis=1)) ** 2 * X.shape[1]):
        raise ZeroVariance("a row of X has zero variance")
    Z = Xc / np.sqrt(ss)[:, None]
    C = Z @ Z.T
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C


def corr_stats(X) -> CorrStats:
    """Largest absolute off-diagonal correlation and smallest eigenvalue of the rows of X."""
    C = corr_matrix(X)
    n = C.shape[0]
    if n == 1:
        return CorrStats(0.0, 1.0)
    off = np.abs(C[~np.eye(n, dtype=bool)])
    return CorrStats(float(off.max()), float(np.linalg.eigvalsh(C)[0]))
