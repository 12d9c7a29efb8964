"""LASSO-family pipelines with a shared fit/forecast contract.

Data convention
---------------
``X`` is ``n x N``: column ``t`` holds the predictors known at information
time ``t``.  ``y`` (length ``N``) is the response known at time ``t``.  The
regression target defaults to ``y[t + 1]`` (one step ahead); a direct
h-step target can be supplied instead, with ``NaN`` where it is not yet
realised.  Response lags are ``y[t], y[t-1], ..., y[t-p_y+1]``.

Every fit is trained on rows ``t >= start`` with a finite target, and
``forecast`` predicts the target at the last column of the history it is
given.  Predictor indices are 0-based.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import arma
from .errors import InsufficientHistory, SingularRegression, Divergence
from .lasso import LassoFit, LassoProblem, lambda_grid, tune_bic
from .numcore import standardize

log = logging.getLogger(__name__)

TAGS = ("PlainLasso", "LassoY", "GlsLasso", "ArdlLasso", "FarmSelect", "ArmarLasso")
LABELS = {
    "PlainLasso": "LAS",
    "LassoY": "LASy",
    "GlsLasso": "GLS-LAS",
    "ArdlLasso": "ARDL-LAS",
    "FarmSelect": "FaSel",
    "ArmarLasso": "ARMAr-LAS",
}


@dataclass(frozen=True)
class EstimatorKind:
    """Method tag plus its hyper-parameters.

    ``max_p``/``max_q`` cap the ARMA filter orders (ArmarLasso) and ``max_p``
    caps the error AR order (GlsLasso).  With ``select_order=False`` the caps
    are used as the exact orders.
    """

    tag: str
    p_y: int = 0
    x_lags: int = 0
    max_p: int = 1
    max_q: int = 0
    select_order: bool = True
    factor_cap: int = 8
    n_lambda: int = 100
    lambda_ratio: float | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown estimator tag {self.tag!r}")
        for name in ("p_y", "x_lags", "max_p", "max_q", "factor_cap"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.tag == "ArmarLasso" and self.p_y < 1:
            raise ValueError("ArmarLasso needs p_y >= 1")

    @property
    def label(self) -> str:
        return LABELS[self.tag]

    def min_start(self) -> int:
        ylag = max(self.p_y - 1, 0)
        if self.tag == "ArmarLasso":
            return max(ylag, self.max_p)
        if self.tag == "GlsLasso":
            return self.max_p
        if self.tag == "ArdlLasso":
            return max(ylag, self.x_lags)
        if self.tag == "PlainLasso":
            return 0
        return ylag

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class FitResult:
    kind: EstimatorKind
    alpha_hat: np.ndarray
    lag_coeffs: np.ndarray
    selected: np.ndarray
    intercept: float
    insample_rss: float
    lasso: LassoFit
    aux: dict = field(default_factory=dict)
    # one predictor index per selected term (ARDL counts every lag copy)
    selected_terms: np.ndarray | None = None
    n_terms: int = 0
    flags: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "kind": self.kind.tag,
            "alpha_hat": [float(v) for v in self.alpha_hat],
            "lag_coeffs": [float(v) for v in self.lag_coeffs],
            "selected": [int(i) for i in self.selected],
            "diagnostics": {
                "intercept": float(self.intercept),
                "lambda": float(self.lasso.lam),
                "df": int(self.lasso.df),
                "bic": float(self.lasso.bic),
                "insample_rss": float(self.insample_rss),
                "n_terms": int(self.n_terms),
                "flags": list(self.flags),
            },
        }


# -- alignment helpers --------------------------------------------------------

def _prepare(X, y, target, kind: EstimatorKind, start):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, N = X.shape
    if y.size != N:
        raise ValueError(f"y has {y.size} entries, X has {N} columns")
    if target is None:
        target = np.r_[y[1:], np.nan]
    target = np.asarray(target, dtype=float).ravel()
    if target.size != N:
        raise ValueError("target must align with the columns of X")
    lo = kind.min_start()
    start = lo if start is None else int(start)
    if start < lo:
        raise ValueError(f"start={start} is below the minimum {lo} for {kind.tag}")
    rows = np.arange(start, N)
    rows = rows[np.isfinite(target[rows])]
    if rows.size < 10:
        raise InsufficientHistory(f"only {rows.size} usable rows")
    return X, y, target, rows


def _ylags(y: np.ndarray, rows: np.ndarray, p_y: int) -> np.ndarray:
    """Columns y[t], y[t-1], ..., y[t-p_y+1] for the given rows."""
    if p_y == 0:
        return np.zeros((rows.size, 0))
    return np.column_stack([y[rows - l] for l in range(p_y)])


def _solve(design, target, kind: EstimatorKind, mask=None) -> LassoFit:
    prob = LassoProblem(design, target, mask)
    grid = lambda_grid(prob, kind.n_lambda, kind.lambda_ratio)
    return tune_bic(prob, grid)


def _support(a: np.ndarray) -> np.ndarray:
    return np.flatnonzero(a)


def _result(kind, fit, n, rows_design, target, **extra) -> FitResult:
    coef = fit.coefficients
    alpha = extra.pop("alpha", coef[:n])
    lags = extra.pop("lags", coef[n:])
    sel = _support(alpha)
    res = FitResult(
        kind=kind,
        alpha_hat=np.asarray(alpha, dtype=float),
        lag_coeffs=np.asarray(lags, dtype=float),
        selected=sel,
        intercept=fit.intercept,
        insample_rss=fit.rss,
        lasso=fit,
        selected_terms=extra.pop("selected_terms", sel),
        n_terms=extra.pop("n_terms", n),
        flags=extra.pop("flags", []),
    )
    res.aux.update(extra)
    return res


# -- PlainLasso / LassoY ------------------------------------------------------

def fit_plain_lasso(X, y, kind: EstimatorKind | None = None, target=None, start=None) -> FitResult:
    kind = kind or EstimatorKind("PlainLasso")
    X, y, target, rows = _prepare(X, y, target, kind, start)
    n = X.shape[0]
    p_y = kind.p_y if kind.tag == "LassoY" else 0
    D = np.hstack([X[:, rows].T, _ylags(y, rows, p_y)])
    fit = _solve(D, target[rows], kind)
    return _result(kind, fit, n, rows, target, predictor_block=X[:, rows], rows=rows)


def fit_lasso_y(X, y, kind: EstimatorKind | None = None, target=None, start=None) -> FitResult:
    kind = kind or EstimatorKind("LassoY", p_y=1)
    return fit_plain_lasso(X, y, kind, target, start)


# -- ArmarLasso ---------------------------------------------------------------

@dataclass
class ArmarDesign:
    W: np.ndarray          # (n + p_y) x rows, standardised
    raw: np.ndarray        # same rows, original units
    arma_fits: list
    rows: np.ndarray
    failures: list


def _degraded_fit(x: np.ndarray, n_cond: int) -> arma.ArmaFit:
    mean = float(x.mean())
    e = x - mean
    e[:n_cond] = 0.0
    css = float(e[n_cond:] @ e[n_cond:])
    return arma.ArmaFit(arma.ArmaSpec(), e, css, np.nan, x.size, False, n_cond, mean)


def _fixed_fit(x: np.ndarray, spec: arma.ArmaSpec, n_cond: int) -> arma.ArmaFit:
    mean = float(x.mean())
    e = arma._css_residuals(x - mean, spec.ar, spec.ma, n_cond)
    css = float(e[n_cond:] @ e[n_cond:])
    return arma.ArmaFit(spec, e, css, np.nan, x.size, True, n_cond, mean)


def fit_predictor_filters(X, max_p: int, max_q: int, select_order: bool = True, specs=None):
    """One ARMA filter per row of ``X``; failures fall back to the demeaned series."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    fits, failures = [], []
    for i, x in enumerate(X):
        if specs is not None:
            fits.append(_fixed_fit(x, specs[i], max_p))
            continue
        try:
            if select_order:
                f = arma.select_order_bic(x, max_p, max_q)
            else:
                f = arma.fit_arma(x, max_p, max_q, n_cond=max_p)
        except (SingularRegression, Divergence, ValueError) as exc:
            log.warning("ARMA fit failed for predictor %d (%s); using demeaned series", i, exc)
            f = _degraded_fit(x, max_p)
            failures.append(i)
        fits.append(f)
    return fits, failures


def build_armar_design(X, y, max_p: int, max_q: int, p_y: int, *, select_order: bool = True,
                       specs=None, rows=None) -> ArmarDesign:
    """Working design: ARMA residuals of every predictor plus response lags.

    ``specs`` bypasses estimation and filters with the given ARMA specs.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, N = X.shape
    if N <= p_y + 10:
        raise InsufficientHistory("series too short for the requested response lags")
    fits, failures = fit_predictor_filters(X, max_p, max_q, select_order, specs)
    if rows is None:
        rows = np.arange(max(max_p, p_y - 1), N)
    U = np.vstack([f.residuals for f in fits])
    raw = np.vstack([U[:, rows], _ylags(y, rows, p_y).T])
    W = np.vstack([standardize(r)[0] for r in raw])
    return ArmarDesign(W, raw, fits, rows, failures)


def fit_armar_lasso(X, y, kind: EstimatorKind | None = None, target=None, start=None, specs=None) -> FitResult:
    kind = kind or EstimatorKind("ArmarLasso", p_y=1)
    X, y, target, rows = _prepare(X, y, target, kind, start)
    n = X.shape[0]
    des = build_armar_design(X, y, kind.max_p, kind.max_q, kind.p_y,
                             select_order=kind.select_order, specs=specs, rows=rows)
    fit = _solve(des.raw.T, target[rows], kind)
    flags = [f"arma_failed:{i}" for i in des.failures]
    return _result(kind, fit, n, rows, target, arma_fits=des.arma_fits,
                   predictor_block=des.raw[:n], rows=rows, flags=flags)


# -- GlsLasso -----------------------------------------------------------------

def _ar_filter(M: np.ndarray, phi: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """M[..., t] - sum_j phi_j M[..., t-j] evaluated at ``rows``."""
    out = M[..., rows].copy()
    for j, ph in enumerate(phi, start=1):
        out -= ph * M[..., rows - j]
    return out


def fit_gls_lasso(X, y, kind: EstimatorKind | None = None, target=None, start=None, phi=None) -> FitResult:
    """Cochrane-Orcutt filtered LASSO.

    A plain LASSO gives residuals, an AR model on them gives the filter, and
    the LASSO is re-run on the filtered response and predictors.  ``phi``
    bypasses the first two steps.
    """
    kind = kind or EstimatorKind("GlsLasso", max_p=1, select_order=False)
    X, y, target, rows = _prepare(X, y, target, kind, start)
    n = X.shape[0]
    flags = []
    if phi is None:
        step1 = _solve(X[:, rows].T, target[rows], kind)
        eps = target[rows] - step1.predict(X[:, rows].T)
        try:
            if kind.select_order:
                ar_fit = arma.select_order_bic(eps, kind.max_p, 0)
            else:
                ar_fit = arma.fit_arma(eps, kind.max_p, 0)
            phi = ar_fit.spec.ar
        except (SingularRegression, Divergence, ValueError):
            phi = np.zeros(0)
            flags.append("error_ar_failed")
    phi = np.asarray(phi, dtype=float)
    if phi.size > kind.min_start() and rows.min() < phi.size:
        raise ValueError("filter order exceeds the available lags")
    if phi.size == 0 or np.all(phi == 0):
        flags.append("degenerate_filter")
    y_f = _ar_filter(target, phi, rows)
    X_f = _ar_filter(X, phi, rows)
    fit = _solve(X_f.T, y_f, kind)
    return _result(kind, fit, n, rows, target, alpha=fit.coefficients, lags=phi,
                   phi=phi, predictor_block=X_f, rows=rows, flags=flags)


# -- ArdlLasso ----------------------------------------------------------------

def fit_ardl_lasso(X, y, kind: EstimatorKind | None = None, target=None, start=None) -> FitResult:
    """LASSO on current and lagged predictors plus response lags.

    ``alpha_hat`` holds the current-period coefficients; a predictor is
    selected when any of its lag copies is nonzero.
    """
    kind = kind or EstimatorKind("ArdlLasso", p_y=1, x_lags=1)
    X, y, target, rows = _prepare(X, y, target, kind, start)
    n = X.shape[0]
    L = kind.x_lags
    blocks = [X[:, rows - j].T for j in range(L + 1)]
    D = np.hstack(blocks + [_ylags(y, rows, kind.p_y)])
    fit = _solve(D, target[rows], kind)
    coef = fit.coefficients
    B = coef[: n * (L + 1)].reshape(L + 1, n)
    nz_terms = np.nonzero(B)
    res = _result(kind, fit, n, rows, target, alpha=B[0], lags=coef[n * (L + 1):],
                  x_lag_coeffs=B, predictor_block=X[:, rows], rows=rows,
                  selected_terms=np.sort(nz_terms[1]), n_terms=n * (L + 1) + kind.p_y)
    res.selected = np.flatnonzero(np.any(B != 0, axis=0))
    return res


# -- FarmSelect ---------------------------------------------------------------

def eigenvalue_ratio(eigvals, cap: int) -> int:
    """argmax_k lambda_k / lambda_{k+1} over k = 1..cap (eigenvalues sorted descending)."""
    lam = np.sort(np.asarray(eigvals, dtype=float))[::-1]
    cap = min(cap, lam.size - 1)
    if cap < 1:
        return 0
    ratios = lam[:cap] / np.maximum(lam[1:cap + 1], 1e-300)
    return int(np.argmax(ratios)) + 1


def factor_decomposition(Xw: np.ndarray, cap: int):
    """Principal-component factors of the standardised rows of ``Xw`` (n x T)."""
    mean = Xw.mean(axis=1)
    sd = Xw.std(axis=1, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (Xw - mean[:, None]) / sd[:, None]
    T = Xs.shape[1]
    w, V = np.linalg.eigh(Xs @ Xs.T / T)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    r = eigenvalue_ratio(w, cap)
    V = V[:, :r]
    F = V.T @ Xs
    Z = (Xs - V @ F) * sd[:, None]
    return {"mean": mean, "sd": sd, "loadings": V, "r": r, "eigvals": w}, F, Z


def fit_farm_select(X, y, kind: EstimatorKind | None = None, target=None, start=None) -> FitResult:
    """LASSO on factor-adjusted predictors; factors enter unpenalised."""
    kind = kind or EstimatorKind("FarmSelect")
    X, y, target, rows = _prepare(X, y, target, kind, start)
    n = X.shape[0]
    fac, F, Z = factor_decomposition(X[:, rows], kind.factor_cap) if n >= 2 else ({"r": 0}, None, None)
    if fac["r"] == 0:
        res = fit_plain_lasso(X, y, EstimatorKind("LassoY", p_y=kind.p_y) if kind.p_y else None, target, rows[0])
        res.kind = kind
        res.flags.append("no_factors")
        res.aux["factors"] = None
        return res
    r = fac["r"]
    ylag = _ylags(y, rows, kind.p_y)
    D = np.hstack([F.T, Z.T, ylag])
    mask = np.r_[np.zeros(r), np.ones(n + kind.p_y)]
    fit = _solve(D, target[rows], kind, mask)
    coef = fit.coefficients
    return _result(kind, fit, n, rows, target, alpha=coef[r:r + n], lags=coef[r + n:],
                   factor_coeffs=coef[:r], factors=fac, predictor_block=Z, rows=rows)


# -- dispatch -----------------------------------------------------------------

_FITTERS = {
    "PlainLasso": fit_plain_lasso,
    "LassoY": fit_lasso_y,
    "GlsLasso": fit_gls_lasso,
    "ArdlLasso": fit_ardl_lasso,
    "FarmSelect": fit_farm_select,
    "ArmarLasso": fit_armar_lasso,
}


def fit(kind: EstimatorKind, X, y, target=None, start=None) -> FitResult:
    return _FITTERS[kind.tag](X, y, kind, target=target, start=start)


def forecast(res: FitResult, X_hist, y_hist) -> float:
    """Forecast of the target for the information time at the last column."""
    X_hist = np.atleast_2d(np.asarray(X_hist, dtype=float))
    y_hist = np.asarray(y_hist, dtype=float).ravel()
    t = X_hist.shape[1] - 1
    kind = res.kind
    need = max(kind.min_start(), res.lag_coeffs.size if kind.tag == "GlsLasso" else 0)
    if t < need or y_hist.size != t + 1:
        raise InsufficientHistory(f"history of length {t + 1} is too short for {kind.tag}")

    def ylag_term(coeffs):
        return sum(c * y_hist[t - l] for l, c in enumerate(coeffs))

    tag = kind.tag
    f = res.intercept
    if tag in ("PlainLasso", "LassoY") or (tag == "FarmSelect" and res.aux.get("factors") is None):
        f += X_hist[:, t] @ res.alpha_hat + ylag_term(res.lag_coeffs)
    elif tag == "ArmarLasso":
        u = np.array([af.filter(x)[t] for af, x in zip(res.aux["arma_fits"], X_hist)])
        f += u @ res.alpha_hat + ylag_term(res.lag_coeffs)
    elif tag == "GlsLasso":
        phi = res.aux["phi"]
        x_f = X_hist[:, t] - sum(ph * X_hist[:, t - j] for j, ph in enumerate(phi, start=1))
        f += x_f @ res.alpha_hat + ylag_term(phi)
    elif tag == "ArdlLasso":
        B = res.aux["x_lag_coeffs"]
        f += sum(X_hist[:, t - j] @ B[j] for j in range(B.shape[0])) + ylag_term(res.lag_coeffs)
    elif tag == "FarmSelect":
        fac = res.aux["factors"]
        xs = (X_hist[:, t] - fac["mean"]) / fac["sd"]
        V = fac["loadings"]
        fn = V.T @ xs
        z = (xs - V @ fn) * fac["sd"]
        f += fn @ res.aux["factor_coeffs"] + z @ res.alpha_hat + ylag_term(res.lag_coeffs)
    return float(f)
