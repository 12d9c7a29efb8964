import math

import numpy as np
import pytest

from armarlab import estimators as est
from armarlab import simlab as sl
from armarlab.errors import NumericalError, NotConverged
from armarlab.simlab import DgpConfig

from oracles import acf1

E = est.EstimatorKind


def test_config_validation():
    with pytest.raises(ValueError):
        DgpConfig("Z", 10, 100)
    with pytest.raises(ValueError):
        DgpConfig("A", 10, 100, s=11)
    with pytest.raises(ValueError):
        DgpConfig("A", 10, 100, phi=1.0)
    assert DgpConfig("A", 10, 100).rho == 0.8 and DgpConfig("B", 10, 100).rho == 0.4


def test_dgp_a_white_noise_rows():
    cfg = DgpConfig("A", 8, 2000, phi=0.0, s=4, seed=1)
    d = sl.gen_dgp(cfg)
    assert d.X.shape == (8, 2001) and d.y.shape == (2001,)
    for row in d.X:
        assert abs(acf1(row)) <= 2.5 / math.sqrt(row.size)
    # cross-correlation of adjacent rows follows rho
    assert np.corrcoef(d.X[0], d.X[1])[0, 1] == pytest.approx(0.8, abs=0.05)


def test_dgp_a_persistent_rows():
    d = sl.gen_dgp(DgpConfig("A", 5, 10_000, phi=0.9, s=5, seed=2))
    for row in d.X:
        assert acf1(row) == pytest.approx(0.9, abs=0.05)


def test_dgp_c_group_structure():
    d = sl.gen_dgp(DgpConfig("C", 14, 10_000, seed=3))
    for i in range(4):
        assert acf1(d.X[i]) == pytest.approx(0.8, abs=0.05)
    # AR(2) rows: rho1 = a1 / (1 - a2)
    for i in range(4, 7):
        assert acf1(d.X[i]) == pytest.approx(0.6 / 0.7, abs=0.05)


def test_dgp_d_has_common_factor():
    far = lambda X: np.corrcoef(X[0], X[-1])[0, 1]
    a = sl.gen_dgp(DgpConfig("A", 20, 3000, phi=0.3, seed=4))
    assert abs(far(a.X)) < 0.1
    for kind in ("B", "D"):
        assert far(sl.gen_dgp(DgpConfig(kind, 20, 3000, phi=0.3, seed=4)).X) > 0.3


def test_y_follows_signal_plus_error():
    d = sl.gen_dgp(DgpConfig("A", 10, 300, phi=0.5, seed=5))
    np.testing.assert_allclose(d.y[1:], d.alpha_star @ d.X[:, :-1] + d.eps[1:], atol=1e-12)
    np.testing.assert_array_equal(d.alpha_star, np.r_[np.ones(10)])


@pytest.mark.parametrize("kind,phi", [("A", 0.9), ("B", 0.3), ("C", 0.0), ("D", 0.6)])
def test_snr_calibration_matches_sample(kind, phi):
    cfg = DgpConfig(kind, 20, 20_000, phi=phi, snr=4.0, seed=6)
    d = sl.gen_dgp(cfg)
    signal = d.alpha_star @ d.X[:, :-1]
    assert signal.var() == pytest.approx(sl.signal_variance(cfg), rel=0.12)
    assert signal.var() / d.eps.var() == pytest.approx(4.0, rel=0.15)


def test_seeded_generation_is_deterministic():
    cfg = DgpConfig("C", 12, 100, seed=7)
    a, b = sl.gen_dgp(cfg), sl.gen_dgp(cfg)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_metrics_examples():
    a = np.r_[np.ones(10), np.zeros(40)]
    m = sl.compute_metrics(a, a, np.arange(10), 50, 1.0, 3.0)
    assert (m.coer, m.tp_pct, m.fp_pct, m.sq_err) == (0.0, 100.0, 0.0, 4.0)
    m = sl.compute_metrics(np.zeros(50), a, [], 50, 0.0, 0.0)
    assert m.tp_pct == 0.0 and m.fp_pct == 0.0
    assert m.coer == pytest.approx(math.sqrt(10), abs=1e-4)
    m = sl.compute_metrics(a, a, [0, 1, 12, 13], 50, 0.0, 0.0)
    assert m.tp_pct == 20.0 and m.fp_pct == 5.0
    # expanded denominator and per-term counting
    m = sl.compute_metrics(a, a, [0, 12], 101, 0.0, 0.0, selected_terms=[0, 0, 12, 12, 12])
    assert m.tp_pct == 10.0 and m.fp_pct == pytest.approx(300 / 91)
    with pytest.raises(ValueError):
        sl.compute_metrics(a[:5], a, [], 50, 0, 0)


def test_design_min_eigen_identity_like():
    t = np.arange(64)
    B = np.vstack([np.sin(2 * np.pi * f * t / 64) for f in (1, 2, 3)])
    assert sl.design_min_eigen(B) == pytest.approx(1.0, abs=1e-10)
    assert math.isnan(sl.design_min_eigen(np.ones((2, 5))))


def test_method_presets():
    assert [m.label for m in sl.default_methods("A")] == ["LAS", "LASy", "GLS-LAS", "ARDL-LAS", "FaSel", "ARMAr-LAS"]
    assert sl.pick_methods("C", ["ARMAr-LAS"])[0].max_q == 2
    with pytest.raises(ValueError):
        sl.pick_methods("A", ["nope"])


def test_self_baseline_is_exactly_one():
    rep = sl.run_monte_carlo(DgpConfig("A", 10, 80, seed=8), [E("PlainLasso")], reps=4)
    s = rep.summary["LAS"]
    assert s.coer_rel == 1.0 and s.rmsfe_rel == 1.0
    assert rep.failures == 0 and len(rep.rows) == 4


def test_monte_carlo_deterministic_and_job_invariant():
    cfg = DgpConfig("A", 10, 80, phi=0.6, seed=9)
    methods = sl.pick_methods("A", ["LAS", "ARMAr-LAS"])
    a = sl.run_monte_carlo(cfg, methods, reps=6).to_dict(with_rows=True)
    b = sl.run_monte_carlo(cfg, methods, reps=6).to_dict(with_rows=True)
    c = sl.run_monte_carlo(cfg, methods, reps=6, n_jobs=2).to_dict(with_rows=True)
    assert a == b == c


def test_baseline_added_when_missing():
    rep = sl.run_monte_carlo(DgpConfig("A", 10, 80, seed=10), sl.pick_methods("A", ["LASy"]), reps=2)
    assert rep.methods == ["LAS", "LASy"] and rep.baseline == "LAS"


def test_failure_policy(monkeypatch):
    real = est.fit

    def flaky(kind, X, y, target=None, start=None):
        if X[0, 0] > 0.5:
            raise NotConverged("forced")
        return real(kind, X, y, target, start)

    monkeypatch.setattr(est, "fit", flaky)
    cfg = DgpConfig("A", 10, 60, seed=11)
    with pytest.raises(NumericalError):
        sl.run_monte_carlo(cfg, [E("PlainLasso")], reps=20)
    rep = sl.run_monte_carlo(cfg, [E("PlainLasso")], reps=20, max_fail_frac=1.0)
    assert 0 < rep.failures < 20
    assert len(rep.rows) == 20 - rep.failures


def test_high_snr_armar_full_recall():
    cfg = DgpConfig("A", 50, 1500, phi=0.9, snr=10, seed=12)
    rep = sl.run_monte_carlo(cfg, sl.pick_methods("A", ["ARMAr-LAS"]), reps=5, with_eigen=False)
    s = rep.summary["ARMAr-LAS"]
    # BIC on the LASSO path still admits about one spurious term per fit here
    assert s.tp_pct == 100.0 and s.fp_pct <= 5.0
