"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import math

import numpy as np


def jacobi_eigenvalues(a, tol: float = 1e-14, max_rot: int = 10_000) -> np.ndarray:
    """Cyclic Jacobi rotations on a symmetric matrix; returns sorted eigenvalues."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    for _ in range(max_rot):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < tol * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                a = J.T @ a @ J
    return np.sort(np.diag(a))


def ols(X, y):
    """Least squares with an intercept via the normal equations."""
    A = np.column_stack([np.ones(len(y)), X])
    return np.linalg.solve(A.T @ A, A.T @ y)


def ar1_path(phi: float, T: int, rng) -> np.ndarray:
    x = np.empty(T)
    x[0] = rng.standard_normal() / math.sqrt(1 - phi * phi)
    for t in range(1, T):
        x[t] = phi * x[t - 1] + rng.standard_normal()
    return x


def acf1(x) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    return float(x[1:] @ x[:-1] / (x @ x))
