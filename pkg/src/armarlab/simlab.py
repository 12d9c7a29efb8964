"""Monte Carlo harness: predictor/error DGPs, SNR calibration and metric tables.

Replication ``r`` of a run with master seed ``s`` draws from
``np.random.default_rng([s, r])``, so results do not depend on scheduling.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from joblib import Parallel, delayed
from scipy import signal

from . import estimators as est
from .errors import ArmarLabError, NumericalError
from .numcore import cholesky, corr_matrix, sym_min_eigen, toeplitz_corr

log = logging.getLogger(__name__)

BURNIN = 500
_PSI_LEN = 4000

# (ar, ma) per predictor group for the general ARMA designs
_GROUPS_C = (
    (range(0, 4), (0.8,), ()),
    (range(4, 7), (0.6, 0.3), ()),
    (range(7, 10), (0.5, 0.4), (0.3,)),
)
_REST_C = ((0.7,), (0.4,))
_EPS_C = (0.7, 0.2)
_FACTOR_AR_D = 0.9


@dataclass(frozen=True)
class DgpConfig:
    kind: str
    n: int
    T: int
    phi: float = 0.0
    rho: float | None = None
    snr: float = 1.0
    s: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("A", "B", "C", "D"):
            raise ValueError("kind must be one of A, B, C, D")
        if self.rho is None:
            object.__setattr__(self, "rho", 0.8 if self.kind in ("A", "C") else 0.4)
        if not abs(self.phi) < 1:
            raise ValueError("|phi| must be < 1")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        if not 1 <= self.s <= self.n:
            raise ValueError("need 1 <= s <= n")
        if self.T < 20:
            raise ValueError("T must be at least 20")

    def to_dict(self) -> dict:
        return asdict(self)


def predictor_specs(cfg: DgpConfig):
    """(ar, ma) of every idiosyncratic predictor process."""
    if cfg.kind in ("A", "B"):
        return [((cfg.phi,), ())] * cfg.n
    specs = [_REST_C] * cfg.n
    for idx, ar, ma in _GROUPS_C:
        for i in idx:
            if i < cfg.n:
                specs[i] = (ar, ma)
    return specs


def error_ar(cfg: DgpConfig) -> tuple:
    return (cfg.phi,) if cfg.kind in ("A", "B") else _EPS_C


def factor_ar(cfg: DgpConfig) -> float | None:
    return {"B": cfg.phi, "D": _FACTOR_AR_D}.get(cfg.kind)


def alpha_star(cfg: DgpConfig) -> np.ndarray:
    a = np.zeros(cfg.n)
    a[: cfg.s] = 1.0
    return a


def psi_weights(ar, ma, length: int = _PSI_LEN) -> np.ndarray:
    imp = np.zeros(length)
    imp[0] = 1.0
    return signal.lfilter(np.r_[1.0, ma], np.r_[1.0, -np.asarray(ar, dtype=float)], imp)


def signal_variance(cfg: DgpConfig) -> float:
    """Var(alpha*' x_t) from psi-weight cross-covariances and the factor term."""
    a = alpha_star(cfg)
    S = np.flatnonzero(a)
    specs = predictor_specs(cfg)
    psi = {i: psi_weights(*specs[i]) for i in S}
    C = toeplitz_corr(cfg.rho, cfg.n)
    var = 0.0
    for i in S:
        for j in S:
            var += a[i] * a[j] * C[i, j] * float(psi[i] @ psi[j])
    fa = factor_ar(cfg)
    if fa is not None:
        var += a.sum() ** 2 / (1.0 - fa ** 2)
    return var


def omega_variance(cfg: DgpConfig) -> float:
    """Innovation variance of the error giving Var(signal) / Var(error) = snr."""
    gain = float(np.sum(psi_weights(error_ar(cfg), ()) ** 2))
    return signal_variance(cfg) / cfg.snr / gain


def _arma_path(ar, ma, shocks: np.ndarray) -> np.ndarray:
    return signal.lfilter(np.r_[1.0, ma], np.r_[1.0, -np.asarray(ar, dtype=float)], shocks, axis=-1)


@dataclass
class SimData:
    X: np.ndarray          # n x (T + 1), columns t = 1..T+1
    y: np.ndarray          # T + 1, y_t = alpha*' x_{t-1} + eps_t
    alpha_star: np.ndarray
    eps: np.ndarray


def gen_dgp(cfg: DgpConfig, rng: np.random.Generator | None = None) -> SimData:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n, L = cfg.n, BURNIN + cfg.T + 2
    chol = cholesky(toeplitz_corr(cfg.rho, n))
    shocks = chol @ rng.standard_normal((n, L))
    X = np.empty((n, L))
    for (ar, ma) in set(predictor_specs(cfg)):
        rows = [i for i, sp in enumerate(predictor_specs(cfg)) if sp == (ar, ma)]
        X[rows] = _arma_path(ar, ma, shocks[rows])
    fa = factor_ar(cfg)
    if fa is not None:
        X += _arma_path((fa,), (), rng.standard_normal(L))[None, :]
    omega = rng.standard_normal(L) * math.sqrt(omega_variance(cfg))
    eps = _arma_path(error_ar(cfg), (), omega)
    a = alpha_star(cfg)
    y = np.empty(L)
    y[0] = eps[0]
    y[1:] = a @ X[:, :-1] + eps[1:]
    keep = slice(BURNIN + 1, L)
    return SimData(X[:, keep], y[keep], a, eps[keep])


# -- metrics -------------------------------------------------------------------

@dataclass(frozen=True)
class MetricRow:
    coer: float
    tp_pct: float
    fp_pct: float
    sq_err: float


def compute_metrics(alpha_hat, alpha_star, selected, denom: int, fcast: float, y_true: float,
                    selected_terms=None) -> MetricRow:
    """Estimation error, selection rates and squared forecast error.

    ``selected_terms`` lists one predictor index per nonzero design term; it
    defaults to ``selected`` and drives the false-positive count.
    """
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    alpha_star = np.asarray(alpha_star, dtype=float)
    if alpha_hat.shape != alpha_star.shape:
        raise ValueError("coefficient vectors differ in length")
    supp = set(np.flatnonzero(alpha_star).tolist())
    s = len(supp)
    if denom - s < len(alpha_star) - s:
        raise ValueError("denominator smaller than the irrelevant set")
    sel = set(int(i) for i in selected)
    terms = [int(i) for i in (selected if selected_terms is None else selected_terms)]
    tp = 100.0 * len(sel & supp) / s if s else 0.0
    fp_count = sum(1 for i in terms if i not in supp)
    fp = 100.0 * fp_count / (denom - s) if denom > s else 0.0
    return MetricRow(float(np.linalg.norm(alpha_hat - alpha_star)), tp, fp, float((fcast - y_true) ** 2))


def design_min_eigen(block: np.ndarray) -> float:
    B = np.asarray(block, dtype=float)
    sd = B.std(axis=1)
    B = B[sd > 0]
    if B.shape[0] == 0:
        return float("nan")
    return sym_min_eigen(corr_matrix(B))


# -- method presets -------------------------------------------------------------

def default_methods(kind: str, factor_cap: int = 8) -> list[est.EstimatorKind]:
    """The six pipelines configured as in the simulation design for ``kind``."""
    E = est.EstimatorKind
    if kind in ("A", "B"):
        return [
            E("PlainLasso"),
            E("LassoY", p_y=1),
            E("GlsLasso", max_p=1, select_order=False),
            E("ArdlLasso", p_y=1, x_lags=1),
            E("FarmSelect", factor_cap=factor_cap),
            E("ArmarLasso", p_y=1, max_p=1, max_q=0, select_order=False),
        ]
    return [
        E("PlainLasso"),
        E("LassoY", p_y=3),
        E("GlsLasso", max_p=2, select_order=True),
        E("ArdlLasso", p_y=2, x_lags=2),
        E("FarmSelect", factor_cap=factor_cap),
        E("ArmarLasso", p_y=3, max_p=2, max_q=2, select_order=True),
    ]


def pick_methods(kind: str, labels) -> list[est.EstimatorKind]:
    by_label = {m.label: m for m in default_methods(kind)}
    by_tag = {m.tag: m for m in default_methods(kind)}
    out = []
    for lab in labels:
        m = by_label.get(lab) or by_tag.get(lab)
        if m is None:
            raise ValueError(f"unknown method {lab!r}")
        out.append(m)
    return out


# -- runner ----------------------------------------------------------------------

@dataclass
class MethodSummary:
    coer: float
    coer_rel: float
    rmsfe: float
    rmsfe_rel: float
    tp_pct: float
    fp_pct: float
    min_eigen_mean: float


@dataclass
class SimReport:
    config: dict
    methods: list
    reps: int
    failures: int
    baseline: str
    summary: dict
    rows: list = field(default_factory=list, repr=False)

    def to_dict(self, with_rows: bool = False) -> dict:
        d = {
            "config": self.config,
            "methods": self.methods,
            "reps": self.reps,
            "failures": self.failures,
            "baseline": self.baseline,
            "summary": {k: asdict(v) for k, v in self.summary.items()},
        }
        if with_rows:
            d["rows"] = self.rows
        return d


def run_replication(cfg: DgpConfig, methods, rep: int, with_eigen: bool = True) -> list[dict]:
    rng = np.random.default_rng([cfg.seed, rep])
    data = gen_dgp(cfg, rng)
    T = cfg.T
    X, y = data.X[:, :T], data.y[:T]
    y_true = float(data.y[T])
    start = max(m.min_start() for m in methods)
    out = []
    for m in methods:
        res = est.fit(m, X, y, start=start)
        fc = est.forecast(res, X, y)
        row = compute_metrics(res.alpha_hat, data.alpha_star, res.selected, res.n_terms,
                              fc, y_true, res.selected_terms)
        rec = {"rep": rep, "method": m.label, **asdict(row), "n_selected": int(res.selected.size)}
        rec["min_eigen"] = design_min_eigen(res.aux["predictor_block"]) if with_eigen else float("nan")
        out.append(rec)
    return out


def _safe_replication(cfg, methods, rep, with_eigen):
    try:
        return rep, run_replication(cfg, methods, rep, with_eigen), None
    except (ArmarLabError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        return rep, None, f"{type(exc).__name__}: {exc}"


def summarize(rows: list[dict], labels: list[str], baseline: str) -> dict:
    out = {}
    stats = {}
    for lab in labels:
        r = [x for x in rows if x["method"] == lab]
        stats[lab] = {
            "coer": float(np.mean([x["coer"] for x in r])),
            "rmsfe": float(math.sqrt(np.mean([x["sq_err"] for x in r]))),
            "tp_pct": float(np.mean([x["tp_pct"] for x in r])),
            "fp_pct": float(np.mean([x["fp_pct"] for x in r])),
            "min_eigen_mean": float(np.mean([x["min_eigen"] for x in r])),
        }
    b = stats[baseline]
    for lab, s in stats.items():
        out[lab] = MethodSummary(
            coer=s["coer"],
            coer_rel=s["coer"] / b["coer"] if lab != baseline else 1.0,
            rmsfe=s["rmsfe"],
            rmsfe_rel=s["rmsfe"] / b["rmsfe"] if lab != baseline else 1.0,
            tp_pct=s["tp_pct"],
            fp_pct=s["fp_pct"],
            min_eigen_mean=s["min_eigen_mean"],
        )
    return out


def run_monte_carlo(cfg: DgpConfig, methods=None, reps: int = 100, n_jobs: int = 1,
                    with_eigen: bool = True, max_fail_frac: float = 0.10) -> SimReport:
    """Replicate, fit every method on the first T points, forecast the held-out one.

    The plain LASSO is always run as the baseline for relative metrics.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    methods = list(methods) if methods is not None else default_methods(cfg.kind)
    if not any(m.tag == "PlainLasso" for m in methods):
        methods = [est.EstimatorKind("PlainLasso")] + methods
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate methods")
    baseline = next(m.label for m in methods if m.tag == "PlainLasso")
    if n_jobs == 1:
        results = [_safe_replication(cfg, methods, r, with_eigen) for r in range(reps)]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_safe_replication)(cfg, methods, r, with_eigen) for r in range(reps))
    results.sort(key=lambda t: t[0])
    rows, failures = [], []
    for rep, rec, err in results:
        if err is None:
            rows.extend(rec)
        else:
            log.warning("replication %d failed: %s", rep, err)
            failures.append(rep)
    if len(failures) > max_fail_frac * reps:
        raise NumericalError(f"{len(failures)} of {reps} replications failed")
    return SimReport(cfg.to_dict(), labels, reps, len(failures), baseline,
                     summarize(rows, labels, baseline), rows)
