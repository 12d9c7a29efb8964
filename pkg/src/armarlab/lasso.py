"""L1-penalised least squares by cyclical coordinate descent.

Objective, on centred (and optionally standardised) columns::

    (1 / 2T) * ||y - c - X b||^2 + lam * sum_j mask_j * |b_j|

The intercept ``c`` is never penalised and is recovered from the means.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

from .errors import AllUnpenalized, NotConverged

TOL = 1e-7
MAX_SWEEPS = 10_000
# lambda_max is nudged up so that the null model is exact despite rounding
_LMAX_SLACK = 1e-10


@dataclass
class LassoProblem:
    design: np.ndarray
    response: np.ndarray
    penalty_mask: np.ndarray | None = None
    standardize_flag: bool = True

    def __post_init__(self):
        self.design = np.ascontiguousarray(np.asarray(self.design, dtype=float))
        self.response = np.asarray(self.response, dtype=float).ravel()
        if self.design.ndim != 2:
            raise ValueError("design must be T x p")
        T, p = self.design.shape
        if self.response.size != T:
            raise ValueError(f"response has {self.response.size} rows, design has {T}")
        if T < 2:
            raise ValueError("need T >= 2")
        if self.penalty_mask is None:
            self.penalty_mask = np.ones(p)
        self.penalty_mask = np.asarray(self.penalty_mask, dtype=float).ravel()
        if self.penalty_mask.size != p or np.any(self.penalty_mask < 0):
            raise ValueError("penalty_mask must be nonnegative with one entry per column")
        if not (np.all(np.isfinite(self.design)) and np.all(np.isfinite(self.response))):
            raise ValueError("design and response must be finite")

    @property
    def T(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    @cached_property
    def _prepared(self):
        X = self.design
        T = X.shape[0]
        xm = X.mean(axis=0)
        Xc = X - xm
        if self.standardize_flag:
            sd = Xc.std(axis=0, ddof=1)
            scale = np.where(sd > 1e-12 * np.maximum(1.0, np.abs(xm)), sd, 0.0)
        else:
            scale = np.where(np.any(Xc != 0, axis=0), 1.0, 0.0)
        live = scale > 0
        Xs = np.zeros_like(Xc)
        Xs[:, live] = Xc[:, live] / scale[live]
        xsq = np.einsum("ij,ij->j", Xs, Xs) / T
        ym = self.response.mean()
        return np.ascontiguousarray(Xs), scale, xm, ym, self.response - ym, xsq

    @property
    def standardized_design(self) -> np.ndarray:
        return self._prepared[0]


@dataclass
class LassoFit:
    coefficients: np.ndarray
    intercept: float
    lam: float
    df: int
    bic: float
    n_sweeps: int
    converged: bool
    rss: float = 0.0
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients)

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.coefficients


def soft_threshold(z: float, gamma: float) -> float:
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    return math.copysign(max(abs(z) - gamma, 0.0), z) if z != 0 else 0.0


@njit(cache=True)
def _cd(Xs, r, b, lam, mask, xsq, tol, max_sweeps):
    T, p = Xs.shape
    trace = np.empty(max_sweeps)
    converged = False
    sweeps = 0
    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in range(p):
            if xsq[j] == 0.0:
                continue
            old = b[j]
            z = 0.0
            for t in range(T):
                z += Xs[t, j] * r[t]
            z = z / T + xsq[j] * old
            g = lam * mask[j]
            if z > g:
                new = (z - g) / xsq[j]
            elif z < -g:
                new = (z + g) / xsq[j]
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                for t in range(T):
                    r[t] -= Xs[t, j] * d
                b[j] = new
                if abs(d) > max_change:
                    max_change = abs(d)
        obj = 0.0
        for t in range(T):
            obj += r[t] * r[t]
        obj = 0.5 * obj / T
        for j in range(p):
            obj += lam * mask[j] * abs(b[j])
        trace[sweep] = obj
        sweeps = sweep + 1
        if max_change <= tol:
            converged = True
            break
    return b, r, sweeps, converged, trace[:sweeps]


def _bic(rss: float, df: int, T: int) -> float:
    return T * math.log(max(rss, 1e-300) / T) + df * math.log(T)


def _null_start(problem: LassoProblem) -> np.ndarray:
    """Least-squares fit on the unpenalised columns, zero elsewhere (standardised scale)."""
    Xs, scale, _, _, yc, _ = problem._prepared
    b = np.zeros(problem.p)
    free = (problem.penalty_mask == 0) & (scale > 0)
    if np.any(free):
        b[free] = np.linalg.lstsq(Xs[:, free], yc, rcond=None)[0]
    return b


def fit_lasso(problem: LassoProblem, lam: float, warm=None) -> LassoFit:
    """Solve the penalised problem at ``lam``; ``warm`` is on the original scale."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    Xs, scale, xm, ym, yc, xsq = problem._prepared
    if warm is None:
        b = _null_start(problem)
    else:
        b = np.asarray(warm, dtype=float) * scale
    r = yc - Xs @ b
    b, r, sweeps, converged, trace = _cd(Xs, r, b.copy(), float(lam), problem.penalty_mask, xsq, TOL, MAX_SWEEPS)
    coef = np.zeros(problem.p)
    live = scale > 0
    coef[live] = b[live] / scale[live]
    intercept = float(ym - xm @ coef)
    rss = float(r @ r)
    df = int(np.count_nonzero(coef))
    return LassoFit(coef, intercept, float(lam), df, _bic(rss, df, problem.T), int(sweeps), bool(converged), rss, trace)


def lambda_max(problem: LassoProblem) -> float:
    """Smallest lambda at which every penalised coefficient is zero."""
    pen = problem.penalty_mask > 0
    if not np.any(pen):
        raise AllUnpenalized("every coefficient is unpenalised")
    Xs, _, _, _, yc, _ = problem._prepared
    r0 = yc - Xs @ _null_start(problem)
    grad = np.abs(Xs[:, pen].T @ r0) / problem.T / problem.penalty_mask[pen]
    lmax = float(grad.max()) * (1.0 + _LMAX_SLACK)
    return lmax if lmax > 0 else 1e-12


def lambda_grid(problem: LassoProblem, n_lambda: int = 100, ratio: float | None = None) -> np.ndarray:
    """Geometric grid from lambda_max down to ratio * lambda_max."""
    if n_lambda < 2:
        raise ValueError("n_lambda must be >= 2")
    if ratio is None:
        ratio = 1e-3 if problem.T > problem.p else 1e-2
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    lmax = lambda_max(problem)
    return lmax * ratio ** (np.arange(n_lambda) / (n_lambda - 1))


def lasso_path(problem: LassoProblem, grid) -> list[LassoFit]:
    """Warm-started fits down a decreasing grid."""
    fits = []
    warm = None
    for lam in np.asarray(grid, dtype=float):
        fit = fit_lasso(problem, lam, warm)
        fits.append(fit)
        warm = fit.coefficients
    return fits


def tune_bic(problem: LassoProblem, grid=None) -> LassoFit:
    """Minimum-BIC fit along ``grid``; ties go to the larger lambda."""
    if grid is None:
        grid = lambda_grid(problem)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid is empty")
    fits = lasso_path(problem, grid)
    ok = [f for f in fits if f.converged]
    if not ok:
        raise NotConverged("no point on the lambda path converged")
    if grid.size == 1:
        return fits[0]
    best = ok[0]
    for f in ok[1:]:
        if f.bic < best.bic:
            best = f
    return best


def kkt_violation(problem: LassoProblem, fit: LassoFit) -> float:
    """Largest breach of the optimality conditions, on the standardised scale."""
    Xs, scale, xm, ym, yc, _ = problem._prepared
    b = fit.coefficients * scale
    r = yc - Xs @ b
    g = Xs.T @ r / problem.T
    bound = fit.lam * problem.penalty_mask
    live = scale > 0
    nz = (b != 0) & live
    z = (b == 0) & live
    v_nz = np.abs(g[nz] - bound[nz] * np.sign(b[nz]))
    v_z = np.maximum(np.abs(g[z]) - bound[z], 0.0)
    return float(max(v_nz.max(initial=0.0), v_z.max(initial=0.0)))
