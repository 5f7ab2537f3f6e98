"""Standard errors and the three confidence interval variants."""

import math

import numpy as np
import pytest
from scipy import stats

from clustersmooth import (
    CovTermEstimate,
    DegenerateInputError,
    cond_var_nw,
    from_arrays,
    get_kernel,
    make_band,
    reference_h,
    residuals,
    se_cr,
    se_iid,
    se_lambda,
    z_quantile,
)

import oracles

EPAN = get_kernel("epanechnikov")
Z95 = 1.959963984540054


def test_z_quantile_table_values():
    assert z_quantile(0.05) == pytest.approx(1.959964, abs=1e-6)
    assert z_quantile(0.05) == Z95
    assert z_quantile(0.10) == pytest.approx(1.6448536269514722, abs=1e-12)


def test_z_quantile_generic_alpha():
    for alpha in (0.02, 0.045, 0.2, 0.5):
        want = float(stats.norm.ppf(1.0 - alpha / 2.0))
        assert z_quantile(alpha) == pytest.approx(want, abs=1e-7)


def test_se_iid_direct_evaluation():
    assert se_iid(0.6, 1, 1.0, 1.0, 1000, 0.1) == pytest.approx(
        0.07745966692414834, abs=1e-15
    )


def test_se_iid_zero_variance():
    assert se_iid(0.6, 1, 0.0, 1.0, 1000, 0.1) == 0.0


def test_se_iid_root_n_scaling():
    one = se_iid(0.6, 1, 1.0, 1.0, 1000, 0.1)
    four = se_iid(0.6, 1, 1.0, 1.0, 4000, 0.1)
    assert four == pytest.approx(one / 2.0, abs=1e-15)


def test_se_iid_rejects_bad_density():
    with pytest.raises(DegenerateInputError):
        se_iid(0.6, 1, 1.0, 0.0, 1000, 0.1)


def test_se_lambda_zero_term_equals_se_cr():
    first = 0.6 * 0.8 / 0.5
    se, clamped = se_lambda(
        first, CovTermEstimate(value=0.0, method="parametric_compromise"),
        0.5, 1000, 0.1, 1,
    )
    assert not clamped
    assert se == pytest.approx(se_cr(0.6, 1, 0.8, 0.5, 1000, 0.1), abs=1e-15)


def test_se_lambda_positive_term_widens():
    first = 0.6 * 0.8 / 0.5
    base, _ = se_lambda(
        first, CovTermEstimate(value=0.0, method="parametric_compromise"),
        0.5, 1000, 0.1, 1,
    )
    wider, _ = se_lambda(
        first, CovTermEstimate(value=0.4, method="parametric_compromise"),
        0.5, 1000, 0.1, 1,
    )
    assert wider > base


def test_se_lambda_clamps_negative_bracket():
    first = 0.01
    se, clamped = se_lambda(
        first, CovTermEstimate(value=-5.0, method="parametric_compromise"),
        0.5, 1000, 0.1, 1,
    )
    assert clamped
    assert se == pytest.approx(math.sqrt(first / (1000 * 0.1)), abs=1e-15)


def test_se_lambda_nonparametric_scales_by_density():
    first = 1.0
    fhat = 0.5
    a, _ = se_lambda(
        first, CovTermEstimate(value=0.2, method="nonparametric"), fhat, 1000, 0.1, 1
    )
    want = math.sqrt((first + 0.2 / fhat**2) / (1000 * 0.1))
    assert a == pytest.approx(want, abs=1e-15)


def test_se_cr_zero_for_constant_response_singleton_clusters():
    rng = np.random.default_rng(53)
    x = rng.uniform(-1, 1, size=12)
    ds = from_arrays([f"s{i}" for i in range(12)], np.full(12, 2.0), x)
    jack = residuals(ds, EPAN, 0.9, "ll", "jackknife")
    sigma2_tilde = cond_var_nw(ds, EPAN, 0.9, 0.0, jack)
    assert se_cr(0.6, 1, sigma2_tilde, 0.5, 12, 0.9) == pytest.approx(0.0, abs=1e-9)


def _band_pipeline_oracle(ids, y, x, ds, estimator, pt, h_m, h_f, h_sigma2):
    """Recompute every make_band ingredient with the brute implementations."""
    n = ds.n
    fit = oracles.nw if estimator == "nw" else oracles.ll
    mhat = fit("epanechnikov", h_m, x, y, [pt])
    fhat = oracles.density_at("epanechnikov", h_f, x, [pt])
    fitted = np.array(
        [y[i] - fit("epanechnikov", h_m, x, y, [x[i, 0]]) for i in range(n)]
    )
    jack = np.empty(n)
    for i in range(n):
        keep = [j for j in range(n) if ids[j] != ids[i]]
        jack[i] = y[i] - fit("epanechnikov", h_m, x[keep], y[keep], [x[i, 0]])
    sigma2_hat = oracles.cond_var("epanechnikov", h_sigma2, x, fitted, [pt])
    sigma2_tilde = oracles.cond_var("epanechnikov", h_sigma2, x, jack, [pt])
    sizes = {}
    for cid in ids:
        sizes[cid] = sizes.get(cid, 0) + 1
    lam = sum(v * v for v in sizes.values()) / n * h_m
    resid = np.empty(n)
    for cid in sizes:
        keep = [j for j in range(n) if ids[j] != cid]
        coef = oracles.ols_poly4(x[keep, 0], y[keep])
        for i in range(n):
            if ids[i] == cid:
                resid[i] = y[i] - np.polynomial.polynomial.polyval(x[i, 0], coef)
    cross = 0.0
    n_pairs = 0
    for cid in sizes:
        rows = [i for i in range(n) if ids[i] == cid]
        for a in range(len(rows)):
            for b in range(a + 1, len(rows)):
                cross += resid[rows[a]] * resid[rows[b]]
                n_pairs += 1
    mu1, s11, s12, _ = oracles.pair_moments_brute(x, list(ids), 1)
    dens = oracles.conditional_diag_normal(
        float(mu1[0]), float(s11[0, 0]), float(s12[0, 0]), pt
    )
    cov_term = lam * (cross / n_pairs) * dens / fhat
    se0 = math.sqrt(0.6 * sigma2_hat / (n * h_m * fhat))
    se1 = math.sqrt(0.6 * sigma2_tilde / (n * h_m * fhat))
    bracket = 0.6 * sigma2_tilde / fhat + cov_term
    if bracket < 0.0:
        bracket = 0.6 * sigma2_tilde / fhat
    se2 = math.sqrt(bracket / (n * h_m))
    return mhat, se0, se1, se2, cov_term


@pytest.mark.parametrize("estimator,tol", [("nw", 1e-12), ("ll", 1e-10)])
def test_make_band_matches_pipeline_oracle(toy_clusters, estimator, tol):
    ids, y, x, ds = toy_clusters
    pt, h_m, h_f, h_sigma2 = 0.1, 0.8, 0.8, 0.7
    band = make_band(
        ds, EPAN, estimator, pt, h_m=h_m, h_f=h_f, h_sigma2=h_sigma2,
        cov_method="parametric_compromise",
    )
    mhat, se0, se1, se2, cov_term = _band_pipeline_oracle(
        ids, y, x, ds, estimator, pt, h_m, h_f, h_sigma2
    )
    assert band.estimate == pytest.approx(mhat, abs=tol)
    assert band.se_iid == pytest.approx(se0, abs=tol)
    assert band.se_cr == pytest.approx(se1, abs=tol)
    assert band.se_lambda == pytest.approx(se2, abs=tol)
    assert band.ci == pytest.approx((mhat - Z95 * se0, mhat + Z95 * se0), abs=1e-9)
    assert band.ci_cr == pytest.approx((mhat - Z95 * se1, mhat + Z95 * se1), abs=1e-9)
    assert band.ci_lambda == pytest.approx((mhat - Z95 * se2, mhat + Z95 * se2), abs=1e-9)
    if cov_term >= 0.0:
        assert band.ci_lambda[1] - band.ci_lambda[0] >= band.ci_cr[1] - band.ci_cr[0]


def test_make_band_nonparametric_path(toy_clusters):
    ids, y, x, ds = toy_clusters
    pt, h_m, h_f, b = 0.1, 0.8, 0.8, 0.9
    band = make_band(
        ds, EPAN, "nw", pt, h_m=h_m, h_f=h_f, h_sigma2=h_f, b=b,
        cov_method="nonparametric",
    )
    n = ds.n
    fitted = np.array(
        [y[i] - oracles.nw("epanechnikov", h_m, x, y, [x[i, 0]]) for i in range(n)]
    )
    fhat = oracles.density_at("epanechnikov", h_f, x, [pt])
    f2 = oracles.pair_density("epanechnikov", b, x, list(ids), 1, [pt])
    pcov = oracles.pair_cov("epanechnikov", b, x, list(ids), fitted, 1, [pt])
    lam = (48.0 / 12.0) * h_m
    jack = np.empty(n)
    for i in range(n):
        keep = [j for j in range(n) if ids[j] != ids[i]]
        jack[i] = y[i] - oracles.nw("epanechnikov", h_m, x[keep], y[keep], [x[i, 0]])
    sigma2_tilde = oracles.cond_var("epanechnikov", h_f, x, jack, [pt])
    bracket = 0.6 * sigma2_tilde / fhat + lam * f2 * pcov / fhat**2
    if bracket < 0.0:
        bracket = 0.6 * sigma2_tilde / fhat
    assert band.cov_method == "nonparametric"
    assert band.se_lambda == pytest.approx(
        math.sqrt(bracket / (n * h_m)), abs=1e-12
    )


def test_make_band_default_bandwidths(toy_clusters):
    _, _, _, ds = toy_clusters
    band = make_band(ds, EPAN, "nw", 0.1, h_m=0.8)
    assert band.h_f == pytest.approx(reference_h(ds), abs=1e-15)
    assert band.h_sigma2 == band.h_f
    assert band.alpha == 0.05


def test_make_band_singleton_clusters_zero_cov_term():
    rng = np.random.default_rng(59)
    x = rng.uniform(-1, 1, size=14)
    y = np.sin(2 * x) + 0.2 * rng.standard_normal(14)
    ds = from_arrays([f"s{i}" for i in range(14)], y, x)
    band = make_band(ds, EPAN, "nw", 0.0, h_m=0.7, h_f=0.7)
    assert band.se_lambda == pytest.approx(band.se_cr, abs=1e-15)
    assert any("single member" in w for w in band.warnings)


def test_make_band_alpha_changes_width(toy_clusters):
    _, _, _, ds = toy_clusters
    wide = make_band(ds, EPAN, "nw", 0.1, h_m=0.8, h_f=0.8, alpha=0.01)
    narrow = make_band(ds, EPAN, "nw", 0.1, h_m=0.8, h_f=0.8, alpha=0.10)
    assert wide.ci[1] - wide.ci[0] > narrow.ci[1] - narrow.ci[0]


def test_make_band_rejects_bad_inputs(toy_clusters):
    _, _, _, ds = toy_clusters
    from clustersmooth import ValidationError

    with pytest.raises(ValidationError, match="alpha"):
        make_band(ds, EPAN, "nw", 0.1, h_m=0.8, alpha=1.5)
    with pytest.raises(ValidationError, match="estimator"):
        make_band(ds, EPAN, "kernel", 0.1, h_m=0.8)
    with pytest.raises(ValidationError, match="cov_method"):
        make_band(ds, EPAN, "nw", 0.1, h_m=0.8, cov_method="bootstrap")
