"""Rolling-window direct forecasting on a transformed macro panel.

Information time ``t`` indexes the panel rows.  Every series is transformed
causally (a value at ``t`` uses raw data up to ``t``), the direct target at
``t`` is realised at ``t + h``, and a fit at origin ``t`` only sees window
rows whose targets are realised by ``t``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import estimators as est
from .errors import ArmarLabError, DataError, NonPositive, NonPositiveForLog, ZeroVariance

log = logging.getLogger(__name__)

TCODE_DROP = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2, 7: 2}


@dataclass
class SeriesTable:
    names: list
    groups: list
    tcodes: np.ndarray
    dates: list
    values: np.ndarray      # T_raw x n_series

    def __post_init__(self):
        self.tcodes = np.asarray(self.tcodes, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.names)
        if self.values.ndim != 2 or self.values.shape[1] != n:
            raise DataError("values must be T x n_series with one column per name")
        if len(self.groups) != n or self.tcodes.size != n:
            raise DataError("names, groups and tcodes must have equal length")
        if len(self.dates) != self.values.shape[0]:
            raise DataError("one date per row is required")
        if len(set(self.names)) != n:
            raise DataError("series names must be unique")
        bad = [c for c in self.tcodes if c not in TCODE_DROP]
        if bad:
            raise DataError(f"tcodes must lie in 1..7, got {bad[0]}")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise DataError("missing or non-finite values are not allowed")

    @property
    def n_series(self) -> int:
        return len(self.names)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise DataError(f"unknown series {name!r}") from None


def _parse_date(s: str):
    try:
        return float(s)
    except ValueError:
        return s.strip()


def read_panel_csv(path) -> SeriesTable:
    """Rows: names, group labels, integer tcodes, then one row per date.

    The first column holds the row labels; missing cells are an error.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 4:
        raise DataError(f"{path}: need a name row, a group row, a tcode row and data")
    names = [c.strip() for c in rows[0][1:]]
    n = len(names)
    for lineno in (2, 3):
        if len(rows[lineno - 1]) != n + 1:
            raise DataError(f"{path}:{lineno}: expected {n + 1} fields, got {len(rows[lineno - 1])}")
    groups = [c.strip() for c in rows[1][1:]]
    tcodes = []
    for j, c in enumerate(rows[2][1:]):
        try:
            code = int(c)
        except ValueError:
            raise DataError(f"{path}:3: tcode {c!r} for {names[j]} is not an integer") from None
        if code not in TCODE_DROP:
            raise DataError(f"{path}:3: tcode {code} for {names[j]} is outside 1..7")
        tcodes.append(code)
    dates, vals = [], []
    for lineno, row in enumerate(rows[3:], start=4):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != n + 1:
            raise DataError(f"{path}:{lineno}: expected {n + 1} fields, got {len(row)}")
        try:
            vals.append([float(c) for c in row[1:]])
        except ValueError:
            raise DataError(f"{path}:{lineno}: missing or non-numeric value") from None
        if not all(math.isfinite(v) for v in vals[-1]):
            raise DataError(f"{path}:{lineno}: non-finite value")
        dates.append(_parse_date(row[0]))
    try:
        return SeriesTable(names, groups, tcodes, dates, np.array(vals))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_panel_csv(table: SeriesTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date"] + list(table.names))
        w.writerow(["group"] + list(table.groups))
        w.writerow(["tcode"] + [int(c) for c in table.tcodes])
        for d, row in zip(table.dates, table.values):
            w.writerow([d] + [repr(float(v)) for v in row])


# -- transforms -----------------------------------------------------------------

def apply_tcode(series, tcode: int) -> np.ndarray:
    """Stationarity transform; the output is shorter by ``TCODE_DROP[tcode]``."""
    x = np.asarray(series, dtype=float).ravel()
    if tcode not in TCODE_DROP:
        raise ValueError(f"tcode must lie in 1..7, got {tcode}")
    if x.size <= TCODE_DROP[tcode]:
        raise DataError("series too short for the requested differencing")
    if tcode in (4, 5, 6):
        if np.any(x <= 0):
            raise NonPositiveForLog("log transform needs positive values")
        x = np.log(x)
    if tcode == 7:
        if np.any(x[:-1] == 0):
            raise NonPositive("growth rate undefined at zero")
        return np.diff(x[1:] / x[:-1] - 1.0)
    order = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2}[tcode]
    return np.diff(x, n=order) if order else x.copy()


def transform_panel(table: SeriesTable) -> np.ndarray:
    """Transformed panel aligned to the raw dates, NaN where undefined (n x T_raw)."""
    T = table.values.shape[0]
    out = np.full((table.n_series, T), np.nan)
    for j, code in enumerate(table.tcodes):
        z = apply_tcode(table.values[:, j], int(code))
        out[j, T - z.size:] = z
    return out


def make_target(cpi, h: int):
    """Twice-differenced log level ``y_t`` and the direct target aligned at ``t``.

    Both are scaled by 1200 and padded with NaN where undefined.
    """
    cpi = np.asarray(cpi, dtype=float).ravel()
    if h < 1:
        raise ValueError("h must be >= 1")
    if cpi.size <= h + 2:
        raise DataError("series too short for the horizon")
    if np.any(cpi <= 0):
        raise NonPositive("price index must be positive")
    lc = np.log(cpi)
    T = lc.size
    g = np.full(T, np.nan)
    g[1:] = 1200.0 * np.diff(lc)
    y = np.full(T, np.nan)
    y[2:] = np.diff(g[1:])
    fut = np.full(T, np.nan)
    fut[1:T - h] = (1200.0 / h) * (lc[1 + h:] - lc[1:T - h]) - g[1:T - h]
    return y, fut


# -- AR benchmark ---------------------------------------------------------------

@dataclass
class ArBenchmark:
    order: int
    coef: np.ndarray       # intercept, then y_t, y_{t-1}, ...

    def predict(self, y_hist: np.ndarray) -> float:
        t = y_hist.size - 1
        return float(self.coef[0] + sum(c * y_hist[t - l] for l, c in enumerate(self.coef[1:])))


def fit_ar_direct(y, target, rows, max_p: int) -> ArBenchmark:
    """OLS of the direct target on p lags of y, p <= max_p chosen by BIC on a common sample."""
    rows = rows[rows >= max_p - 1] if max_p > 0 else rows
    tgt = target[rows]
    n = rows.size
    best = None
    for p in range(max_p + 1):
        Z = np.column_stack([np.ones(n)] + [y[rows - l] for l in range(p)])
        coef, *_ = np.linalg.lstsq(Z, tgt, rcond=None)
        rss = float(np.sum((tgt - Z @ coef) ** 2))
        bic = n * math.log(max(rss, 1e-300) / n) + (p + 1) * math.log(n)
        if best is None or bic < best[0]:
            best = (bic, p, coef)
    return ArBenchmark(best[1], best[2])


# -- rolling forecasts ------------------------------------------------------------

def empirical_methods(p_y: int = 12, order_cap: int = 12, ma_cap: int = 12,
                      factor_cap: int = 8) -> dict:
    E = est.EstimatorKind
    return {
        "LAS": E("LassoY", p_y=p_y),
        "GLS-LAS": E("GlsLasso", max_p=order_cap, select_order=True),
        "ARDL-LAS": E("ArdlLasso", p_y=p_y, x_lags=2),
        "FaSel": E("FarmSelect", p_y=p_y, factor_cap=factor_cap),
        "ARMAr-LAS": E("ArmarLasso", p_y=p_y, max_p=order_cap, max_q=ma_cap, select_order=True),
    }


@dataclass
class ForecastConfig:
    horizon: int = 12
    window_years: int = 7
    methods: tuple = ("AR", "LAS", "GLS-LAS", "ARDL-LAS", "FaSel", "ARMAr-LAS")
    p_y: int = 12
    y_lag_start: int = 0
    order_cap: int = 12
    ma_cap: int = 12
    ar_cap: int = 12
    factor_cap: int = 8
    periods_per_year: int = 12
    first_origin: int | None = None
    last_origin: int | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.horizon < 1 or self.window_years < 1:
            raise ValueError("horizon and window_years must be >= 1")
        if self.y_lag_start not in (0, 1):
            raise ValueError("y_lag_start must be 0 or 1")
        known = {"AR"} | set(empirical_methods())
        bad = [m for m in self.methods if m not in known]
        if bad:
            raise ValueError(f"unknown methods {bad}")

    @property
    def window(self) -> int:
        return self.window_years * self.periods_per_year

    def kinds(self) -> dict:
        return empirical_methods(self.p_y, self.order_cap, self.ma_cap, self.factor_cap)


@dataclass
class ForecastRecord:
    origin: object
    horizon: int
    method: str
    forecast: float
    realized: float
    selected: list = field(default_factory=list)
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error and math.isfinite(self.forecast)


def _panel_arrays(table: SeriesTable, target: str, h: int, y_lag_start: int):
    Z = transform_panel(table)
    j = table.names.index(target) if target in table.names else None
    if j is None:
        raise DataError(f"unknown target series {target!r}")
    y, fut = make_target(table.values[:, j], h)
    if y_lag_start == 1:
        y = np.r_[np.nan, y[:-1]]
    keep = [i for i in range(table.n_series) if i != j]
    return Z[keep], y, fut, keep


def _one_origin(t, Z, y, fut, keep, cfg: ForecastConfig, kinds, dates):
    W = cfg.window
    lo = t - W + 1
    Xw, yw = Z[:, lo:t + 1], y[lo:t + 1]
    tw = fut[lo:t + 1].copy()
    # targets not yet realised at the origin are hidden
    tw[np.arange(lo, t + 1) + cfg.horizon > t] = np.nan
    realized = float(fut[t]) if t + cfg.horizon < fut.size else float("nan")
    out = []
    for name in cfg.methods:
        try:
            if name == "AR":
                rows = np.flatnonzero(np.isfinite(tw))
                ar = fit_ar_direct(yw, tw, rows, cfg.ar_cap)
                out.append(ForecastRecord(dates[t], cfg.horizon, name, ar.predict(yw), realized))
                continue
            kind = kinds[name]
            res = est.fit(kind, Xw, yw, target=tw)
            fc = est.forecast(res, Xw, yw)
            sel = sorted(int(keep[i]) for i in res.selected)
            out.append(ForecastRecord(dates[t], cfg.horizon, name, fc, realized, sel))
        except (ArmarLabError, np.linalg.LinAlgError, ValueError) as exc:
            out.append(ForecastRecord(dates[t], cfg.horizon, name, float("nan"), realized,
                                      error=f"{type(exc).__name__}: {exc}"))
    return t, out


def origins(table: SeriesTable, target: str, cfg: ForecastConfig) -> np.ndarray:
    """Origins whose window is fully defined; the last one is the final row."""
    Z, y, fut, _ = _panel_arrays(table, target, cfg.horizon, cfg.y_lag_start)
    T = Z.shape[1]
    defined = np.all(np.isfinite(Z), axis=0) & np.isfinite(y)
    first_def = int(np.argmax(defined))
    first = first_def + cfg.window - 1
    if cfg.first_origin is not None:
        first = max(first, cfg.first_origin)
    last = T - 1 if cfg.last_origin is None else min(cfg.last_origin, T - 1)
    if first > last:
        raise DataError("not enough observations for the first window")
    return np.arange(first, last + 1)


def rolling_forecast(table: SeriesTable, target: str, cfg: ForecastConfig) -> list[ForecastRecord]:
    """Re-fit every method at each origin on the trailing window and forecast h steps ahead."""
    Z, y, fut, keep = _panel_arrays(table, target, cfg.horizon, cfg.y_lag_start)
    ts = origins(table, target, cfg)
    kinds = cfg.kinds()
    if cfg.n_jobs == 1:
        results = [_one_origin(t, Z, y, fut, keep, cfg, kinds, table.dates) for t in ts]
    else:
        results = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_one_origin)(t, Z, y, fut, keep, cfg, kinds, table.dates) for t in ts)
    results.sort(key=lambda r: r[0])
    order = {m: i for i, m in enumerate(cfg.methods)}
    recs = [r for _, batch in results for r in sorted(batch, key=lambda r: order[r.method])]
    nfail = sum(1 for r in recs if r.error)
    if nfail:
        log.warning("%d forecasts failed and are excluded from evaluation", nfail)
    return recs


# -- evaluation -----------------------------------------------------------------

def diebold_mariano(loss_a, loss_b, h: int = 1) -> dict:
    """Equal-accuracy test on the loss differential ``a - b``.

    The p-value is one-sided and small when ``a`` has the lower expected loss.
    """
    a = np.asarray(loss_a, dtype=float).ravel()
    b = np.asarray(loss_b, dtype=float).ravel()
    if a.size != b.size or a.size < 10:
        raise ValueError("loss series must have equal length >= 10")
    if h < 1:
        raise ValueError("h must be >= 1")
    d = a - b
    N = d.size
    dc = d - d.mean()
    g0 = float(dc @ dc) / N
    if g0 <= 1e-14 * max(1.0, float(np.mean(np.abs(a)) + np.mean(np.abs(b)))) ** 2:
        raise ZeroVariance("loss differential is constant")
    lrv = g0
    for j in range(1, min(h, N)):
        lrv += 2.0 * (1.0 - j / h) * float(dc[j:] @ dc[:-j]) / N
    if lrv <= 0:
        lrv = g0
    stat = float(d.mean() / math.sqrt(lrv / N))
    return {"stat": stat, "p_one_sided": float(stats.norm.cdf(stat))}


def _paired(records, a: str, b: str):
    fa = {r.origin: r for r in records if r.method == a and r.ok and math.isfinite(r.realized)}
    fb = {r.origin: r for r in records if r.method == b and r.ok and math.isfinite(r.realized)}
    common = sorted(set(fa) & set(fb), key=lambda o: (str(type(o)), o))
    ea = np.array([fa[o].forecast - fa[o].realized for o in common])
    eb = np.array([fb[o].forecast - fb[o].realized for o in common])
    return ea, eb


def rmsfe(records, method: str) -> float:
    e = np.array([r.forecast - r.realized for r in records
                  if r.method == method and r.ok and math.isfinite(r.realized)])
    return float(np.sqrt(np.mean(e ** 2))) if e.size else float("nan")


def rmsfe_matrix(records, methods, h: int) -> dict:
    """Pairwise RMSFE ratios (row / column) with one-sided DM p-values, on common origins."""
    out = {}
    for a in methods:
        for b in methods:
            if a == b:
                continue
            ea, eb = _paired(records, a, b)
            if ea.size == 0:
                continue
            ratio = float(np.sqrt(np.mean(ea ** 2)) / np.sqrt(np.mean(eb ** 2)))
            try:
                p = diebold_mariano(ea ** 2, eb ** 2, h)["p_one_sided"]
            except (ZeroVariance, ValueError):
                p = None
            out[f"{a}|{b}"] = {"ratio": ratio, "dm_p": p, "n": int(ea.size)}
    return out


def selection_frequency(records, table: SeriesTable) -> dict:
    """Per-variable selection frequency, per-group counts by origin and mean model size."""
    if not records:
        raise ValueError("no records")
    out = {"variables": {}, "groups": {}, "average_selected": {}}
    methods = sorted({r.method for r in records if r.method != "AR"})
    for m in methods:
        recs = [r for r in records if r.method == m and r.ok]
        if not recs:
            continue
        counts = np.zeros(table.n_series)
        for r in recs:
            counts[r.selected] += 1
        out["variables"][m] = {table.names[i]: float(counts[i] / len(recs))
                               for i in range(table.n_series) if counts[i] > 0}
        out["average_selected"][m] = float(np.mean([len(r.selected) for r in recs]))
        g = {}
        for r in recs:
            per = {}
            for i in r.selected:
                per[table.groups[i]] = per.get(table.groups[i], 0) + 1
            g[str(r.origin)] = per
        out["groups"][m] = g
    return out
