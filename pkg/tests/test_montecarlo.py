"""Data generating processes and the experiment drivers."""

import math

import numpy as np
import pytest

from clustersmooth import (
    DgpConfig,
    ValidationError,
    WeightWindow,
    cv_decomposition,
    default_window,
    generate,
    noise_scale,
    run_ase_table,
    run_coverage_table,
    sigma2_bar_w,
    true_bias,
    true_m,
    true_m_prime,
    true_second_deriv,
)

import oracles


def _cfg(**kw):
    base = dict(
        setup=1, g_count=20, n_g_base=5, n_g_last=5, rho_x=0.2, rho_e=0.2, seed=11
    )
    base.update(kw)
    return DgpConfig(**base)


def test_config_validation():
    with pytest.raises(ValidationError):
        _cfg(setup=3)
    with pytest.raises(ValidationError):
        _cfg(rho_x=1.0)
    with pytest.raises(ValidationError):
        _cfg(g_count=0)
    assert _cfg(n_g_last=30).n == 19 * 5 + 30


def test_generate_deterministic_and_shaped():
    cfg = _cfg()
    a = generate(cfg, 3)
    b = generate(cfg, 3)
    assert np.array_equal(a.y_pooled, b.y_pooled)
    assert np.array_equal(a.x_pooled, b.x_pooled)
    assert a.g_count == 20
    assert a.n == 100
    c = generate(cfg, 4)
    assert not np.array_equal(a.y_pooled, c.y_pooled)


def test_generate_replications_do_not_share_draws():
    cfg = _cfg(g_count=2, n_g_base=2, n_g_last=2)
    xs = [generate(cfg, r).x_pooled[0, 0] for r in range(50)]
    assert len(set(xs)) == 50


def test_generate_marginal_moments():
    cfg = _cfg(g_count=5000, n_g_base=20, n_g_last=20, rho_x=0.5, rho_e=0.5)
    ds = generate(cfg, 0)
    x = ds.x_pooled[:, 0]
    assert abs(x.mean()) < 0.05
    assert abs(x.var() - 1.0) < 0.05
    groups = x.reshape(5000, 20)
    corr = np.corrcoef(groups[:, 0], groups[:, 1])[0, 1]
    assert abs(corr - 0.5) < 0.04
    e_implied = ds.y_pooled - true_m(1, x)
    assert abs(e_implied.var() - 0.25) < 0.02


def test_generate_independent_case():
    cfg = _cfg(g_count=5000, n_g_base=20, n_g_last=20, rho_x=0.0, rho_e=0.0)
    ds = generate(cfg, 0)
    groups = ds.x_pooled[:, 0].reshape(5000, 20)
    corr = np.corrcoef(groups[:, 0], groups[:, 1])[0, 1]
    assert abs(corr) < 0.05


def test_true_m_values():
    assert true_m(1, 0.0) == 2.0
    assert true_m(2, 0.0) == 0.0
    assert true_m(2, 0.25) == pytest.approx(0.25, abs=1e-15)
    assert noise_scale(1, 0.7) == 0.5
    assert noise_scale(2, 0.0) == pytest.approx(0.6, abs=1e-15)


def test_derivatives_match_finite_differences():
    for setup in (1, 2):
        for pt in (-0.9, -0.3, 0.0, 0.4, 0.75):
            fd1 = (true_m(setup, pt + 1e-6) - true_m(setup, pt - 1e-6)) / 2e-6
            assert true_m_prime(setup, pt) == pytest.approx(fd1, abs=1e-6)
            fd2 = oracles.fd_second_deriv(lambda v: true_m(setup, v), pt)
            assert true_second_deriv(setup, pt) == pytest.approx(fd2, abs=1e-6)


def test_bias_constants_agree_where_density_is_flat():
    assert true_bias(1, "ll", 0.0) == pytest.approx(true_bias(1, "nw", 0.0), abs=1e-14)
    assert true_bias(1, "ll", 0.5) != pytest.approx(true_bias(1, "nw", 0.5), abs=1e-6)


def test_default_windows():
    w1 = default_window(1)
    assert (float(np.atleast_1d(w1.lo)[0]), float(np.atleast_1d(w1.hi)[0])) == (-1.5, 1.5)
    assert default_window(2).integral() == 1.0


def test_sigma2_bar_w_closed_forms():
    w1 = default_window(1)
    want = 0.25 * (math.erf(1.5 / math.sqrt(2.0)))
    assert sigma2_bar_w(1, w1) == pytest.approx(want, abs=1e-12)
    assert sigma2_bar_w(1, w1) == pytest.approx(0.21659639936557096, abs=1e-12)
    assert sigma2_bar_w(2, default_window(2)) == pytest.approx(
        0.0603765776551912, abs=1e-8
    )


def test_ase_table_smoke():
    table = run_ase_table(_cfg(), reps=3, methods=("rot", "cr-rot", "cr-cv"))
    assert table.n_failed == 0
    by = {r.method: r for r in table.records}
    assert set(by) == {"rot", "cr-rot", "cr-cv"}
    for r in by.values():
        assert r.mean_ase >= 0.0
        assert r.mean_h > 0.0
        assert r.reps_used == 3
    grid_lo = by["cr-rot"].mean_h / 3.0
    assert by["cr-cv"].mean_h >= grid_lo - 1e-12


def test_ase_table_worker_count_invariant():
    cfg = _cfg()
    a = run_ase_table(cfg, reps=4, methods=("cr-rot",), workers=1)
    b = run_ase_table(cfg, reps=4, methods=("cr-rot",), workers=3)
    assert a.records[0].mean_ase == b.records[0].mean_ase
    assert a.records[0].mean_h == b.records[0].mean_h


def test_ase_table_rejects_unknown_method():
    with pytest.raises(ValidationError, match="unknown method"):
        run_ase_table(_cfg(), reps=1, methods=("aic",))


def test_coverage_table_smoke():
    table = run_coverage_table(_cfg(rho_x=0.5, rho_e=0.5), x_eval=0.75, reps=4)
    by = {r.variant: r for r in table.records}
    assert set(by) == {"iid", "cr", "lambda"}
    for r in by.values():
        assert 0.0 <= r.coverage <= 1.0
        assert r.mean_length > 0.0
    assert table.mean_h_m < table.mean_h_cv
    assert table.mean_lambda > 0.0


def test_coverage_bias_modes_differ():
    cfg = _cfg(rho_x=0.5, rho_e=0.5)
    under = run_coverage_table(cfg, x_eval=0.75, reps=3, bias_mode="undersmooth")
    ignore = run_coverage_table(cfg, x_eval=0.75, reps=3, bias_mode="ignore")
    assert under.mean_h_m < ignore.mean_h_m


def test_coverage_singleton_clusters_iid_equals_cr():
    cfg = DgpConfig(
        setup=1, g_count=60, n_g_base=1, n_g_last=1, rho_x=0.0, rho_e=0.0, seed=5
    )
    table = run_coverage_table(cfg, x_eval=0.0, reps=30)
    by = {r.variant: r for r in table.records}
    se = math.sqrt(
        by["iid"].se_coverage ** 2 + by["cr"].se_coverage ** 2
    ) or 1.0 / 30.0
    assert abs(by["iid"].coverage - by["cr"].coverage) <= 3.0 * se + 1e-12
    assert by["lambda"].coverage == by["cr"].coverage


def test_cv_decomposition_smoke():
    res = cv_decomposition(_cfg(g_count=25), h=0.4, reps=6)
    assert res.reps_used + res.n_failed == 6
    assert res.sigma2_bar_w == pytest.approx(0.21659639936557096, abs=1e-12)
    assert np.isfinite(res.mean_cv)
    assert np.isfinite(res.mean_diff)


def test_cv_decomposition_window_override():
    narrow = WeightWindow(lo=-0.5, hi=0.5)
    res = cv_decomposition(_cfg(g_count=25), h=0.4, reps=2, window=narrow)
    assert res.sigma2_bar_w == pytest.approx(
        0.25 * math.erf(0.5 / math.sqrt(2.0)), abs=1e-12
    )
