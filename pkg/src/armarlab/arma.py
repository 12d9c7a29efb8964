"""Univariate ARMA(p, q): simulation, estimation and order selection.

Estimation is Hannan-Rissanen initialisation followed by conditional
sum-of-squares (CSS) refinement.  Every series is demeaned before fitting.
Residuals before ``n_cond`` are conditioned away and stored as zeros.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import Divergence, NonStationarySpec, SingularRegression

DEFAULT_BURNIN = 500
_ROOT_MARGIN = 1e-3


@dataclass(frozen=True)
class ArmaSpec:
    ar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    innovation_var: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ar", np.atleast_1d(np.asarray(self.ar, dtype=float)).copy())
        object.__setattr__(self, "ma", np.atleast_1d(np.asarray(self.ma, dtype=float)).copy())
        self.ar.setflags(write=False)
        self.ma.setflags(write=False)

    @property
    def p(self) -> int:
        return self.ar.size

    @property
    def q(self) -> int:
        return self.ma.size

    def is_stationary(self) -> bool:
        return _roots_outside(-self.ar)

    def is_invertible(self) -> bool:
        return _roots_outside(self.ma)

    def is_valid(self) -> bool:
        return self.innovation_var > 0 and self.is_stationary() and self.is_invertible()

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "q": self.q,
            "ar": [float(v) for v in self.ar],
            "ma": [float(v) for v in self.ma],
            "innovation_var": float(self.innovation_var),
        }


@dataclass(frozen=True)
class ArmaFit:
    spec: ArmaSpec
    residuals: np.ndarray
    css: float
    bic: float
    sample_size: int
    converged: bool
    n_cond: int = 0
    mean: float = 0.0

    @property
    def order(self) -> tuple[int, int]:
        return self.spec.p, self.spec.q

    def filter(self, series) -> np.ndarray:
        """Residuals of ``series`` under the fitted filter (training mean removed)."""
        x = np.asarray(series, dtype=float) - self.mean
        return _css_residuals(x, self.spec.ar, self.spec.ma, self.n_cond)


# -- polynomial helpers -------------------------------------------------------

def _roots_outside(c: np.ndarray) -> bool:
    """True if 1 + c1 z + ... + ck z^k has every root strictly outside the unit circle."""
    c = np.asarray(c, dtype=float)
    k = c.size
    if k == 0:
        return True
    if k == 1:
        return abs(c[0]) < 1.0
    if k == 2:
        # 1 + a z + b z^2  <=>  AR(2) with phi1 = -a, phi2 = -b
        p1, p2 = -c[0], -c[1]
        return p1 + p2 < 1.0 and p2 - p1 < 1.0 and abs(p2) < 1.0
    roots = np.roots(np.r_[1.0, c][::-1])
    return bool(np.all(np.abs(roots) > 1.0))


def _reflect(c: np.ndarray) -> np.ndarray:
    """Move roots of 1 + c1 z + ... inside (or on) the unit circle to the outside."""
    c = np.asarray(c, dtype=float)
    if _roots_outside(c) and (c.size == 0 or _min_root_modulus(c) > 1.0 + _ROOT_MARGIN):
        return c
    roots = np.roots(np.r_[1.0, c][::-1])
    mod = np.abs(roots)
    inside = mod <= 1.0
    roots = np.where(inside, roots / np.where(mod > 0, mod, 1.0) ** 2, roots)
    mod = np.abs(roots)
    roots = np.where(mod < 1.0 + _ROOT_MARGIN, roots / mod * (1.0 + _ROOT_MARGIN), roots)
    poly = np.real(np.poly(roots))[::-1]
    return poly[1:] / poly[0]


def _min_root_modulus(c: np.ndarray) -> float:
    roots = np.roots(np.r_[1.0, c][::-1])
    return float(np.min(np.abs(roots))) if roots.size else np.inf


def project(spec: ArmaSpec) -> ArmaSpec:
    """Nearest stationary/invertible spec obtained by root reflection."""
    ar = -_reflect(-spec.ar) if not _roots_outside(-spec.ar) else spec.ar
    ma = _reflect(spec.ma) if not _roots_outside(spec.ma) else spec.ma
    return ArmaSpec(ar, ma, spec.innovation_var)


# -- kernels ------------------------------------------------------------------

@njit(cache=True)
def _css_residuals(x, ar, ma, n_cond):
    T = x.shape[0]
    p = ar.shape[0]
    q = ma.shape[0]
    e = np.zeros(T)
    for t in range(n_cond, T):
        s = x[t]
        for l in range(1, p + 1):
            s -= ar[l - 1] * x[t - l]
        for k in range(1, q + 1):
            if t - k >= n_cond:
                s -= ma[k - 1] * e[t - k]
        e[t] = s
    return e


@njit(cache=True)
def _css_value(x, ar, ma, n_cond):
    e = _css_residuals(x, ar, ma, n_cond)
    s = 0.0
    for t in range(n_cond, x.shape[0]):
        s += e[t] * e[t]
    return s


# -- public API ---------------------------------------------------------------

def arma_filter(spec: ArmaSpec, innovations) -> np.ndarray:
    """Run innovations through the ARMA recursion with zero pre-sample values."""
    return lfilter(np.r_[1.0, spec.ma], np.r_[1.0, -spec.ar], np.asarray(innovations, dtype=float))


def simulate_arma(spec: ArmaSpec, T: int, burnin: int = DEFAULT_BURNIN, seed=None) -> np.ndarray:
    """Gaussian ARMA realisation of length ``T`` after discarding ``burnin`` values."""
    if not spec.is_valid():
        raise NonStationarySpec(f"spec is not stationary/invertible: {spec.to_dict()}")
    if T < 1 or burnin < 0:
        raise ValueError("need T >= 1 and burnin >= 0")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(T + burnin) * math.sqrt(spec.innovation_var)
    return arma_filter(spec, u)[burnin:]


def _lagmat(x: np.ndarray, lags: int, start: int) -> np.ndarray:
    """Columns x_{t-1}, ..., x_{t-lags} for rows t = start .. T-1."""
    T = x.size
    return np.column_stack([x[start - l:T - l] for l in range(1, lags + 1)]) if lags else np.zeros((T - start, 0))


def _ols(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    if A.shape[1] == 0:
        return np.zeros(0)
    if A.shape[0] <= A.shape[1] or np.linalg.matrix_rank(A) < A.shape[1]:
        raise SingularRegression("regression design is rank deficient")
    return np.linalg.lstsq(A, b, rcond=None)[0]


def long_ar_order(T: int) -> int:
    return int(min(math.ceil(10 * math.log10(T)), T // 4))


def hannan_rissanen(series, p: int, q: int) -> ArmaSpec:
    """Two-stage regression estimate of an ARMA(p, q), projected to the valid region."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    T = x.size
    if p < 0 or q < 0:
        raise ValueError("orders must be nonnegative")
    if T < 10 * (p + q + 1):
        raise ValueError(f"series too short ({T}) for ARMA({p},{q})")
    if q == 0:
        A = _lagmat(x, p, p)
        b = x[p:]
        phi = _ols(A, b)
        resid = b - A @ phi if p else b
        spec = ArmaSpec(phi, np.zeros(0), float(np.mean(resid ** 2)))
        return project(spec)

    m = max(long_ar_order(T), p + q)
    if T - m <= m:
        raise ValueError(f"series too short ({T}) for a long AR of order {m}")
    A = _lagmat(x, m, m)
    pi = _ols(A, x[m:])
    ehat = np.zeros(T)
    ehat[m:] = x[m:] - A @ pi

    start = m + q
    cols = [x[start - l:T - l] for l in range(1, p + 1)]
    cols += [ehat[start - k:T - k] for k in range(1, q + 1)]
    D = np.column_stack(cols)
    b = x[start:]
    coef = _ols(D, b)
    resid = b - D @ coef
    spec = ArmaSpec(coef[:p], coef[p:], float(np.mean(resid ** 2)))
    return project(spec)


def _make_fit(x, spec, n_cond, converged, mean) -> ArmaFit:
    e = _css_residuals(x, spec.ar, spec.ma, n_cond)
    n_eff = x.size - n_cond
    css = float(np.sum(e[n_cond:] ** 2))
    k = spec.p + spec.q
    bic = n_eff * math.log(css / n_eff) + k * math.log(n_eff) if css > 0 else -np.inf
    spec = ArmaSpec(spec.ar, spec.ma, css / n_eff)
    return ArmaFit(spec, e, css, bic, x.size, converged, n_cond, mean)


def fit_arma_css(series, init: ArmaSpec, n_cond: int | None = None) -> ArmaFit:
    """Refine ``init`` by minimising the conditional sum of squares.

    Pure AR models are solved exactly by least squares; models with an MA part
    use Nelder-Mead started at ``init``.  Coefficients are mapped back into the
    stationary/invertible region by root reflection at every evaluation.
    """
    raw = np.asarray(series, dtype=float)
    mean = float(raw.mean())
    x = raw - mean
    p, q = init.p, init.q
    m = p if n_cond is None else int(n_cond)
    if m < p:
        raise ValueError("n_cond must be >= p")
    if x.size - m < p + q + 2:
        raise ValueError("series too short for the requested order")
    init = project(init)

    def css_of(ar, ma):
        return _css_value(x, ar, ma, m)

    css0 = css_of(init.ar, init.ma)
    if not np.isfinite(css0):
        raise Divergence("CSS objective is not finite at the initial value")

    if p + q == 0:
        return _make_fit(x, init, m, True, mean)

    if q == 0:
        A = _lagmat(x, p, m)
        try:
            phi = _ols(A, x[m:])
        except SingularRegression:
            return _make_fit(x, init, m, False, mean)
        cand = project(ArmaSpec(phi, np.zeros(0), init.innovation_var))
        if css_of(cand.ar, cand.ma) > css0:
            cand = init
        return _make_fit(x, cand, m, True, mean)

    def objective(theta):
        ar = theta[:p]
        ma = theta[p:]
        if not _roots_outside(-ar):
            ar = -_reflect(-ar)
        if not _roots_outside(ma):
            ma = _reflect(ma)
        return css_of(ar, ma)

    theta0 = np.r_[init.ar, init.ma]
    res = minimize(
        objective,
        theta0,
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-12 * max(css0, 1.0), "maxiter": 400 * (p + q), "maxfev": 600 * (p + q)},
    )
    best = res.x if res.fun <= css0 else theta0
    if not np.all(np.isfinite(best)):
        raise Divergence("optimizer produced non-finite parameters")
    cand = project(ArmaSpec(best[:p], best[p:], init.innovation_var))
    if css_of(cand.ar, cand.ma) > css0:
        cand = init
    return _make_fit(x, cand, m, bool(res.success), mean)


def fit_arma(series, p: int, q: int, n_cond: int | None = None) -> ArmaFit:
    """Hannan-Rissanen start plus CSS refinement for a fixed order."""
    try:
        init = hannan_rissanen(series, p, q)
    except (SingularRegression, ValueError):
        init = ArmaSpec(np.zeros(p), np.zeros(q), float(np.var(series)))
    return fit_arma_css(series, init, n_cond=p if n_cond is None else n_cond)


def select_order_bic(series, p_max: int, q_max: int) -> ArmaFit:
    """Fit every order in the (p_max, q_max) grid and keep the smallest BIC.

    All candidates condition on the first ``p_max`` observations so their
    criteria are computed on the same sample.  Ties go to the smaller p + q,
    then the smaller p.
    """
    if p_max < 0 or q_max < 0:
        raise ValueError("order caps must be nonnegative")
    best = None
    best_key = None
    errors = []
    for p in range(p_max + 1):
        for q in range(q_max + 1):
            try:
                fit = fit_arma(series, p, q, n_cond=p_max)
            except (SingularRegression, Divergence, ValueError) as exc:
                errors.append(exc)
                continue
            key = (fit.bic, p + q, p)
            if best is None or key < best_key:
                best, best_key = fit, key
    if best is None:
        raise errors[-1]
    return best


def arma_residuals(fit: ArmaFit) -> np.ndarray:
    return fit.residuals


def arma_acvf(spec: ArmaSpec, nlags: int, n_psi: int = 4000) -> np.ndarray:
    """Autocovariances 0..nlags from the truncated MA(infinity) weights."""
    psi = arma_filter(spec, np.r_[1.0, np.zeros(n_psi - 1)])
    return np.array([spec.innovation_var * psi[: n_psi - h] @ psi[h:] for h in range(nlags + 1)])
