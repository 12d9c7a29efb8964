"""Command-line entry point.

Every run resolves its parameters (defaults < ``--config`` file < flags),
computes all outputs in memory, then writes them atomically next to a
``manifest.json`` that can be passed back through ``--config`` to repeat
the run.  Wall time goes to ``timing.json`` so artifacts and manifest stay
byte-identical across re-runs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import tempfile
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import corrdist, estimators as est, forecastlab as fl, simlab
from .errors import ConfigError, DataError, InvalidXi, NumericalError, ArmarLabError

log = logging.getLogger("armarlab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
OUTPUT_ENV = "ARMARLAB_OUTPUT_DIR"

DEFAULTS = {
    "density": {"T": 100, "phi_i": 0.6, "phi_j": None, "variant": "quadratic", "reps": 5000,
                "grid_points": 201, "fit": "mle"},
    "simulate": {"dgp": "A", "n": 50, "T": 150, "phi": 0.9, "rho": None, "snr": 1.0, "s": 10},
    "mc-table": {"dgp": "A", "n": 50, "T": 150, "snr": 1.0, "phis": [0.3, 0.6, 0.9, 0.95],
                 "rho": None, "s": 10, "reps": 200, "methods": None},
    "fit": {"data": None, "target": None, "horizon": 12, "method": "ARMAr-LAS", "window_years": None,
            "p_y": 12, "order_cap": 12, "ma_cap": 12, "factor_cap": 8},
    "forecast": {"data": None, "target": None, "horizon": 12, "window_years": 7,
                 "methods": list(fl.ForecastConfig.methods), "p_y": 12, "y_lag_start": 0,
                 "order_cap": 12, "ma_cap": 12, "ar_cap": 12, "factor_cap": 8,
                 "first_origin": None, "last_origin": None},
}


# -- output handling ---------------------------------------------------------------

class Outputs:
    """Artifacts staged in memory and committed together."""

    def __init__(self, root: Path):
        self.root = root
        self.files: dict[str, bytes] = {}

    def add_text(self, name: str, text: str) -> None:
        self.files[name] = text.encode()

    def add_json(self, name: str, obj) -> None:
        self.add_text(name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def add_csv(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self.add_text(name, buf.getvalue())

    def commit(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        staged = []
        try:
            for name, data in self.files.items():
                fd, tmp = tempfile.mkstemp(dir=self.root, prefix=f".{name}.", suffix=".tmp")
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                staged.append((tmp, self.root / name))
        except BaseException:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, dest in staged:
            os.replace(tmp, dest)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if v is None:
        return ""
    return v


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    raise TypeError(f"not serialisable: {type(o)}")


def _versions() -> dict:
    import numba
    import scipy
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"armarlab": pkg, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# -- config resolution ----------------------------------------------------------------

def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    # a manifest carries the resolved config under "config"
    if "config" in obj and isinstance(obj["config"], dict):
        obj = dict(obj["config"])
    return obj


def resolve(command: str, args: argparse.Namespace) -> dict:
    cfg = {"command": command, "seed": 0, "jobs": None}
    cfg.update(DEFAULTS[command])
    if args.config:
        filecfg = _load_config_file(args.config)
        if filecfg.get("command", command) != command:
            raise ConfigError(f"config is for {filecfg['command']!r}, not {command!r}")
        unknown = set(filecfg) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(filecfg)
    for key in cfg:
        v = getattr(args, key.replace("-", "_"), None)
        if v is not None:
            cfg[key] = v
    cfg["jobs"] = None  # worker count never affects results and is kept out of the manifest
    return cfg


def _floats(s: str) -> list[float]:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _strings(s: str) -> list[str]:
    return [v.strip() for v in s.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="armarlab", description="ARMA-filtered LASSO toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config or a previous manifest.json")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output-dir", dest="output_dir", help=f"output directory (env {OUTPUT_ENV})")
        sp.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
        sp.add_argument("-v", "--verbose", action="store_true")

    d = sub.add_parser("density", help="correlation density vs Monte Carlo")
    common(d)
    d.add_argument("--T", type=int)
    d.add_argument("--phi", dest="phi_i", type=float)
    d.add_argument("--phi-j", dest="phi_j", type=float)
    d.add_argument("--variant", choices=["linear", "quadratic"])
    d.add_argument("--reps", type=int)
    d.add_argument("--grid-points", dest="grid_points", type=int)
    d.add_argument("--fit", choices=["mle", "moments"])

    s = sub.add_parser("simulate", help="draw one dataset from a DGP")
    common(s)
    s.add_argument("--dgp", choices=list("ABCD"))
    s.add_argument("--n", type=int)
    s.add_argument("--T", type=int)
    s.add_argument("--phi", type=float)
    s.add_argument("--rho", type=float)
    s.add_argument("--snr", type=float)
    s.add_argument("--s", type=int)

    m = sub.add_parser("mc-table", help="Monte Carlo comparison table")
    common(m)
    m.add_argument("--dgp", choices=list("ABCD"))
    m.add_argument("--n", type=int)
    m.add_argument("--T", type=int)
    m.add_argument("--snr", type=float)
    m.add_argument("--phis", type=_floats)
    m.add_argument("--rho", type=float)
    m.add_argument("--s", type=int)
    m.add_argument("--reps", type=int)
    m.add_argument("--methods", type=_strings)

    for name, helptext in (("fit", "fit one method on a panel"), ("forecast", "rolling forecasts on a panel")):
        f = sub.add_parser(name, help=helptext)
        common(f)
        f.add_argument("--data")
        f.add_argument("--target")
        f.add_argument("--horizon", type=int)
        f.add_argument("--window-years", dest="window_years", type=int)
        f.add_argument("--p-y", dest="p_y", type=int)
        f.add_argument("--order-cap", dest="order_cap", type=int)
        f.add_argument("--ma-cap", dest="ma_cap", type=int)
        f.add_argument("--factor-cap", dest="factor_cap", type=int)
        if name == "fit":
            f.add_argument("--method")
        else:
            f.add_argument("--methods", type=_strings)
            f.add_argument("--ar-cap", dest="ar_cap", type=int)
            f.add_argument("--y-lag-start", dest="y_lag_start", type=int, choices=[0, 1])
            f.add_argument("--first-origin", dest="first_origin", type=int)
            f.add_argument("--last-origin", dest="last_origin", type=int)
    return p


# -- pipelines ----------------------------------------------------------------------

def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise ConfigError(f"missing required parameter {k!r}")


def run_density(cfg, out: Outputs, jobs):
    T, pi = int(cfg["T"]), float(cfg["phi_i"])
    pj = pi if cfg["phi_j"] is None else float(cfg["phi_j"])
    if T < 4 or not (abs(pi) < 1 and abs(pj) < 1):
        raise ConfigError("need T >= 4 and |phi| < 1")
    if int(cfg["reps"]) < 100 or int(cfg["grid_points"]) < 3:
        raise ConfigError("need reps >= 100 and grid_points >= 3")
    edges = np.linspace(-1, 1, int(cfg["grid_points"]))
    mc = corrdist.mc_corr_density(T, pi, pj, int(cfg["reps"]), [int(cfg["seed"]), 0], edges)
    fit = corrdist.fit_density_params(mc.samples, T, pi, pj, cfg["fit"])
    centres = 0.5 * (edges[1:] + edges[:-1])
    info = {"variant": cfg["variant"], "valid": True, "xi_v": None, "params": None}
    try:
        params = corrdist.density_params(T, pi, pj, cfg["variant"])
        dens = corrdist.corr_density(centres, params)
        info["params"] = vars(params)
        info["xi_v"] = params.xi_v
    except InvalidXi as exc:
        info.update(valid=False, xi_v=exc.value, T_v=exc.T_v, reason=str(exc))
        dens = np.full(centres.size, np.nan)
    info["fitted_params"] = vars(fit)
    info["ks_fitted_vs_mc"] = corrdist.ks_distance(mc.samples, fit)
    fitted = corrdist.corr_density(centres, fit)
    out.add_csv("density.csv", ["r", "D_closed_form", "D_fitted", "mc_density"],
                zip(centres, [None if np.isnan(v) else v for v in dens], fitted, mc.density))
    out.add_json("density.json", info)


def _dgp_config(cfg, phi) -> simlab.DgpConfig:
    try:
        return simlab.DgpConfig(cfg["dgp"], int(cfg["n"]), int(cfg["T"]), phi=float(phi),
                                rho=cfg["rho"], snr=float(cfg["snr"]), s=int(cfg["s"]), seed=int(cfg["seed"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def run_simulate(cfg, out: Outputs, jobs):
    dc = _dgp_config(cfg, cfg["phi"])
    data = simlab.gen_dgp(dc)
    n = dc.n
    out.add_csv("simulation.csv", ["t", "y"] + [f"x{i + 1}" for i in range(n)],
                ([t + 1, data.y[t]] + list(data.X[:, t]) for t in range(data.y.size)))
    out.add_json("simulation.json", {"alpha_star": data.alpha_star, "signal_variance": simlab.signal_variance(dc),
                                     "omega_variance": simlab.omega_variance(dc)})


def run_mc_table(cfg, out: Outputs, jobs):
    if int(cfg["reps"]) < 1:
        raise ConfigError("reps must be >= 1")
    labels = cfg["methods"] or [m.label for m in simlab.default_methods(cfg["dgp"])]
    try:
        methods = simlab.pick_methods(cfg["dgp"], labels)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    dcs = [_dgp_config(cfg, phi) for phi in cfg["phis"]]
    long_rows, summary = [], {}
    for dc in dcs:
        rep = simlab.run_monte_carlo(dc, methods, int(cfg["reps"]), n_jobs=jobs)
        key = f"dgp={dc.kind},n={dc.n},T={dc.T},phi={dc.phi},snr={dc.snr}"
        summary[key] = rep.to_dict()
        for lab, ms in rep.summary.items():
            for metric, val in vars(ms).items():
                long_rows.append([dc.kind, dc.n, dc.T, dc.phi, dc.snr, lab, metric, val])
    out.add_csv("mc_table.csv", ["dgp", "n", "T", "phi", "snr", "method", "metric", "value"], long_rows)
    out.add_json("mc_summary.json", summary)


def _load_panel(cfg) -> fl.SeriesTable:
    _require(cfg, "data", "target")
    try:
        return fl.read_panel_csv(cfg["data"])
    except OSError as exc:
        raise DataError(f"cannot read {cfg['data']}: {exc}") from None


def run_fit(cfg, out: Outputs, jobs):
    table = _load_panel(cfg)
    kinds = fl.empirical_methods(int(cfg["p_y"]), int(cfg["order_cap"]), int(cfg["ma_cap"]), int(cfg["factor_cap"]))
    if cfg["method"] not in kinds:
        raise ConfigError(f"method must be one of {sorted(kinds)}")
    fc = fl.ForecastConfig(horizon=int(cfg["horizon"]), window_years=int(cfg["window_years"] or 1), methods=())
    Z, y, fut, keep = fl._panel_arrays(table, cfg["target"], fc.horizon, 0)
    T = Z.shape[1]
    ok = np.all(np.isfinite(Z), axis=0) & np.isfinite(y)
    lo = int(np.argmax(ok))
    if cfg["window_years"]:
        lo = max(lo, T - fc.window)
    res = est.fit(kinds[cfg["method"]], Z[:, lo:], y[lo:], target=fut[lo:])
    rec = res.to_record()
    rec["selected_names"] = [table.names[keep[i]] for i in res.selected]
    rec["forecast"] = est.forecast(res, Z[:, lo:], y[lo:])
    rec["origin"] = table.dates[-1]
    out.add_json("fit.json", rec)


def run_forecast(cfg, out: Outputs, jobs):
    table = _load_panel(cfg)
    try:
        fc = fl.ForecastConfig(horizon=int(cfg["horizon"]), window_years=int(cfg["window_years"]),
                               methods=tuple(cfg["methods"]), p_y=int(cfg["p_y"]),
                               y_lag_start=int(cfg["y_lag_start"]), order_cap=int(cfg["order_cap"]),
                               ma_cap=int(cfg["ma_cap"]), ar_cap=int(cfg["ar_cap"]),
                               factor_cap=int(cfg["factor_cap"]), first_origin=cfg["first_origin"],
                               last_origin=cfg["last_origin"], n_jobs=jobs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    recs = fl.rolling_forecast(table, cfg["target"], fc)
    out.add_csv("forecasts.csv", ["origin", "horizon", "method", "forecast", "realized", "selected", "error"],
                ([r.origin, r.horizon, r.method, r.forecast, r.realized,
                  ";".join(table.names[i] for i in r.selected), r.error] for r in recs))
    summary = {
        "rmsfe": {m: fl.rmsfe(recs, m) for m in fc.methods},
        "ratios": fl.rmsfe_matrix(recs, list(fc.methods), fc.horizon),
        "failures": sum(1 for r in recs if r.error),
    }
    out.add_json("rmsfe.json", summary)
    freq = fl.selection_frequency(recs, table)
    out.add_csv("selection_frequency.csv", ["method", "variable", "group", "frequency"],
                ([m, v, table.groups[table.names.index(v)], f] for m, vs in sorted(freq["variables"].items())
                 for v, f in vs.items()))
    out.add_json("selection_summary.json", {"average_selected": freq["average_selected"], "groups": freq["groups"]})


PIPELINES = {"density": run_density, "simulate": run_simulate, "mc-table": run_mc_table,
             "fit": run_fit, "forecast": run_forecast}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = resolve(args.command, args)
        jobs = args.jobs or os.cpu_count() or 1
        root = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or "out")
        out = Outputs(root)
        PIPELINES[args.command](cfg, out, jobs)
        manifest = {
            "command": args.command,
            "config": cfg,
            "config_hash": _config_hash(cfg),
            "seed": cfg["seed"],
            "versions": _versions(),
            "artifacts": {k: hashlib.sha256(v).hexdigest() for k, v in sorted(out.files.items())},
        }
        out.add_json("manifest.json", manifest)
        out.add_json("timing.json", {"wall_time_s": round(time.perf_counter() - t0, 3)})
        out.commit()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArmarLabError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {len(out.files)} files to {root}")
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
