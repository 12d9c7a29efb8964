import math

import numpy as np
import pytest

from armarlab import forecastlab as fl
from armarlab.errors import DataError, NonPositive, NonPositiveForLog, ZeroVariance
from armarlab.forecastlab import ForecastConfig, ForecastRecord, SeriesTable
from armarlab.simlab import DgpConfig, gen_dgp

from oracles import ar1_path


def _cpi_from(v):
    """Price index whose twice-differenced log level (x1200) reproduces ``v``."""
    return np.exp(np.cumsum(np.cumsum(np.r_[0.0, 0.0, v[2:]])) / 1200.0 + 4.0)


def _panel(X, y, start=0):
    n, T = X.shape
    names = [f"x{i}" for i in range(n)] + ["CPI"]
    groups = ["g%d" % (i % 3) for i in range(n)] + ["prices"]
    values = np.column_stack([X.T, _cpi_from(y)])
    return SeriesTable(names, groups, [1] * n + [6], list(range(start, start + T)), values)


def _dgp_panel(T=240, phi=0.9, seed=0, n=20):
    d = gen_dgp(DgpConfig("A", n, T, phi=phi, snr=5.0, s=min(10, n), seed=seed))
    return _panel(d.X[:, :T], d.y[:T])


def test_tcode_examples():
    x = np.array([3.0, 5.0, 9.0, 20.0])
    np.testing.assert_array_equal(fl.apply_tcode(x, 1), x)
    np.testing.assert_allclose(fl.apply_tcode([1, math.e, math.e ** 2], 5), [1, 1], atol=1e-14)
    np.testing.assert_array_equal(fl.apply_tcode([3, 5, 9], 2), [2, 4])
    np.testing.assert_array_equal(fl.apply_tcode([3, 5, 9], 3), [2])
    np.testing.assert_allclose(fl.apply_tcode(x, 4), np.log(x))
    np.testing.assert_allclose(fl.apply_tcode(x, 6), np.diff(np.log(x), 2))
    np.testing.assert_allclose(fl.apply_tcode(x, 7), np.diff(x[1:] / x[:-1] - 1))
    for code in range(1, 8):
        assert fl.apply_tcode(x, code).size == x.size - fl.TCODE_DROP[code]
    with pytest.raises(NonPositiveForLog):
        fl.apply_tcode([1.0, 0.0, 2.0], 5)
    with pytest.raises(ValueError):
        fl.apply_tcode(x, 8)


def test_transform_panel_alignment():
    tab = SeriesTable(["a", "b"], ["g", "g"], [1, 3], [1, 2, 3, 4], np.array([[1, 1], [2, 4], [3, 9], [4, 16.0]]))
    Z = fl.transform_panel(tab)
    np.testing.assert_array_equal(Z[0], [1, 2, 3, 4])
    assert np.all(np.isnan(Z[1, :2])) and np.array_equal(Z[1, 2:], [2, 2])


@pytest.mark.parametrize("cpi", [np.full(40, 100.0), 100 * 1.003 ** np.arange(40)])
def test_make_target_cancels_constant_growth(cpi):
    y, fut = fl.make_target(cpi, 12)
    np.testing.assert_allclose(y[np.isfinite(y)], 0, atol=1e-9)
    np.testing.assert_allclose(fut[np.isfinite(fut)], 0, atol=1e-9)


def test_make_target_matches_direct_formula():
    t = np.arange(60)
    cpi = np.exp(4 + 0.002 * t + 0.01 * (t >= 30))
    h = 12
    y, fut = fl.make_target(cpi, h)
    P = list(cpi)
    for i in range(2, 60):
        assert y[i] == pytest.approx(1200 * (math.log(P[i] / P[i - 1]) - math.log(P[i - 1] / P[i - 2])), abs=1e-9)
    for i in range(1, 60 - h):
        want = 1200 / h * math.log(P[i + h] / P[i]) - 1200 * math.log(P[i] / P[i - 1])
        assert fut[i] == pytest.approx(want, abs=1e-9)
    assert np.all(np.isnan(fut[60 - h:])) and math.isnan(fut[0])
    with pytest.raises(NonPositive):
        fl.make_target(np.r_[cpi[:-1], -1.0], h)


def test_h1_target_is_next_value():
    v = np.random.default_rng(0).standard_normal(50)
    y, fut = fl.make_target(_cpi_from(v), 1)
    np.testing.assert_allclose(y[2:], v[2:], atol=1e-8)
    np.testing.assert_allclose(fut[2:-1], v[3:], atol=1e-8)


def test_csv_round_trip_and_errors(tmp_path):
    tab = _dgp_panel(T=60, n=4)
    p = tmp_path / "panel.csv"
    fl.write_panel_csv(tab, p)
    back = fl.read_panel_csv(p)
    assert back.names == tab.names and back.groups == tab.groups
    np.testing.assert_array_equal(back.values, tab.values)
    lines = p.read_text().splitlines()
    bad = tmp_path / "bad_tcode.csv"
    bad.write_text("\n".join(lines[:2] + ["tcode,1,x,1,1,6"] + lines[3:]))
    with pytest.raises(DataError, match=r":3:"):
        fl.read_panel_csv(bad)
    bad.write_text("\n".join(lines[:2] + ["tcode,1,9,1,1,6"] + lines[3:]))
    with pytest.raises(DataError, match=r":3:.*outside"):
        fl.read_panel_csv(bad)
    cells = lines[4].split(",")
    cells[2] = ""
    bad.write_text("\n".join(lines[:4] + [",".join(cells)] + lines[5:]))
    with pytest.raises(DataError, match=r":5:"):
        fl.read_panel_csv(bad)


def test_table_validation():
    with pytest.raises(DataError):
        SeriesTable(["a"], ["g"], [1], [2, 1], np.ones((2, 1)))
    with pytest.raises(DataError):
        SeriesTable(["a"], ["g"], [1], [1, 2], np.array([[1.0], [np.nan]]))


def test_window_arithmetic():
    cfg = ForecastConfig(window_years=7)
    assert cfg.window == 84
    tab = _dgp_panel(T=150, n=3)
    ts = fl.origins(tab, "CPI", ForecastConfig(horizon=1, window_years=7, methods=("AR",)))
    # CPI needs two raw points before the first y value
    assert ts[0] == 2 + 84 - 1 and ts[-1] == 149


def test_ar_beats_random_walk():
    rng = np.random.default_rng(1)
    T = 400
    v = ar1_path(0.5, T, rng)
    X = rng.standard_normal((3, T))
    tab = _panel(X, v)
    cfg = ForecastConfig(horizon=1, window_years=10, methods=("AR",), ar_cap=4)
    recs = fl.rolling_forecast(tab, "CPI", cfg)
    y, _ = fl.make_target(tab.column("CPI"), 1)
    ar = [(r.forecast - r.realized) ** 2 for r in recs if math.isfinite(r.realized)]
    rw = [(y[t] - r.realized) ** 2 for t, r in zip(fl.origins(tab, "CPI", cfg), recs) if math.isfinite(r.realized)]
    assert math.sqrt(np.mean(ar)) < math.sqrt(np.mean(rw))


SMALL = dict(horizon=1, window_years=10, p_y=1, order_cap=1, ma_cap=0, ar_cap=2, factor_cap=3)


def test_armar_beats_lasso_on_persistent_panel():
    tab = _dgp_panel(T=200, phi=0.9, seed=3)
    cfg = ForecastConfig(methods=("LAS", "ARMAr-LAS"), **SMALL)
    recs = fl.rolling_forecast(tab, "CPI", cfg)
    assert all(r.ok for r in recs)
    assert fl.rmsfe(recs, "ARMAr-LAS") < fl.rmsfe(recs, "LAS")
    m = fl.rmsfe_matrix(recs, ["LAS", "ARMAr-LAS"], 1)
    assert m["ARMAr-LAS|LAS"]["ratio"] == pytest.approx(1 / m["LAS|ARMAr-LAS"]["ratio"])
    assert m["ARMAr-LAS|LAS"]["n"] == 200 - 1 - (2 + 119)


def test_no_look_ahead():
    tab = _dgp_panel(T=170, phi=0.6, seed=4, n=8)
    cut = 150
    cfg = ForecastConfig(methods=("AR", "LAS", "GLS-LAS", "ARDL-LAS", "FaSel", "ARMAr-LAS"),
                         last_origin=cut, **SMALL)
    base = fl.rolling_forecast(tab, "CPI", cfg)
    poisoned = SeriesTable(tab.names, tab.groups, tab.tcodes, tab.dates, tab.values.copy())
    poisoned.values[cut + 1:] *= 3.0
    again = fl.rolling_forecast(poisoned, "CPI", cfg)
    assert [r.forecast for r in base] == [r.forecast for r in again]
    assert [r.selected for r in base] == [r.selected for r in again]


def test_every_method_runs_with_horizon_twelve():
    tab = _dgp_panel(T=180, phi=0.6, seed=5, n=8)
    cfg = ForecastConfig(horizon=12, window_years=10, p_y=2, order_cap=1, ma_cap=1, ar_cap=2,
                         factor_cap=3, first_origin=160)
    recs = fl.rolling_forecast(tab, "CPI", cfg)
    assert len(recs) == 20 * 6 and all(r.ok for r in recs)
    assert sum(math.isfinite(r.realized) for r in recs) == 8 * 6


def test_failed_forecasts_are_flagged():
    tab = _dgp_panel(T=130, n=4)
    cfg = ForecastConfig(methods=("LAS",), p_y=200, window_years=10, horizon=1)
    recs = fl.rolling_forecast(tab, "CPI", cfg)
    assert recs and all(not r.ok and r.error for r in recs)
    assert math.isnan(fl.rmsfe(recs, "LAS"))


def test_dm_examples():
    rng = np.random.default_rng(6)
    a = rng.exponential(size=100)
    with pytest.raises(ZeroVariance):
        fl.diebold_mariano(a, a)
    b = a + 1.0 + 1e-3 * rng.standard_normal(100)
    assert fl.diebold_mariano(a, b)["p_one_sided"] < 1e-3
    assert fl.diebold_mariano(b, a)["p_one_sided"] > 0.999


def test_dm_size():
    rng = np.random.default_rng(7)
    rej = 0
    for _ in range(1000):
        ea, eb = rng.standard_normal((2, 120))
        rej += fl.diebold_mariano(ea ** 2, eb ** 2, 1)["p_one_sided"] < 0.05
    assert 0.03 <= rej / 1000 <= 0.07


def test_dm_long_run_variance_uses_bartlett_weights():
    d = np.random.default_rng(8).standard_normal(50)
    out = fl.diebold_mariano(d, np.zeros(50), h=3)
    dc = d - d.mean()
    g = [dc[j:] @ dc[:50 - j] / 50 for j in range(3)]
    lrv = g[0] + 2 * (2 / 3) * g[1] + 2 * (1 / 3) * g[2]
    assert out["stat"] == pytest.approx(d.mean() / math.sqrt(lrv / 50))


def test_selection_frequency_examples():
    tab = _dgp_panel(T=30, n=3)
    recs = [ForecastRecord(o, 1, "M", 0.0, 0.0, [0, 2]) for o in range(5)]
    recs += [ForecastRecord(o, 1, "E", 0.0, 0.0, []) for o in range(5)]
    recs.append(ForecastRecord(0, 1, "AR", 0.0, 0.0))
    sf = fl.selection_frequency(recs, tab)
    assert sf["variables"]["M"] == {"x0": 1.0, "x2": 1.0}
    assert sf["average_selected"]["E"] == 0 and sf["average_selected"]["M"] == 2
    assert sf["groups"]["M"]["0"] == {"g0": 1, "g2": 1}
    assert "AR" not in sf["variables"]


def test_rmsfe_self_ratio_is_one():
    recs = [ForecastRecord(o, 1, m, float(o), 0.5) for o in range(12) for m in ("a", "b")]
    m = fl.rmsfe_matrix(recs, ["a", "b"], 1)
    assert m["a|b"]["ratio"] == 1.0 and m["a|b"]["dm_p"] is None
