"""Pointwise standard errors and confidence intervals.

Three interval variants share the center m_hat(x) and the two-sided
normal quantile and differ only in the standard error:

- "iid": se = sqrt(r_k^d sigma2_hat / (n h^d fhat)) with sigma2_hat
  smoothed from full-sample residuals; correct only under independence.
- "cr": the same formula with sigma2_tilde smoothed from jackknife
  (leave-own-cluster-out) residuals, which resists the mechanical
  shrinkage of within-cluster residual correlation.
- "lambda": adds the within-cluster covariance contribution, giving
  se = sqrt((1/(n h^d)) (r_k^d sigma2_tilde / fhat + second)) where
  ``second`` is the lambda-scaled covariance term.  When the bracketed
  sum is negative (the covariance estimate can be), it is clamped to the
  sigma2 term alone and a warning is attached.

Normal quantiles for the common levels alpha in {0.10, 0.05, 0.01} are
hard-coded to double precision; other levels use a rational approximation
(relative error below 1.2e-9), keeping the package free of a statistics
dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bandwidth import reference_h
from .dataset import size_summary
from .density import density, joint_density_pairs
from .errors import DegenerateInputError, ValidationError
from .regress import ll_fit, nw_fit, residuals
from .variance import (
    CovTermEstimate,
    cond_cov_nw,
    cond_var_nw,
    lambda_hat,
    parametric_cov_term,
)

__all__ = [
    "InferenceBand",
    "z_quantile",
    "se_iid",
    "se_cr",
    "se_lambda",
    "make_band",
]

_Z_TABLE = {
    0.10: 1.6448536269514722,
    0.05: 1.959963984540054,
    0.01: 2.5758293035489004,
}

_COV_METHODS = ("parametric_compromise", "nonparametric")


@dataclass(frozen=True)
class InferenceBand:
    """A pointwise estimate with three interval variants.

    ``ci``, ``ci_cr``, ``ci_lambda`` are (lo, hi) tuples at level alpha.
    ``lambda_value`` is the cluster-size scale used by the lambda variant.
    """

    x: np.ndarray
    estimate: float
    se_iid: float
    se_cr: float
    se_lambda: float
    ci: tuple
    ci_cr: tuple
    ci_lambda: tuple
    alpha: float
    h_m: float
    h_f: float
    h_sigma2: float
    lambda_value: float
    cov_method: str
    warnings: tuple = ()


def _acklam_ppf(p):
    """Rational approximation to the standard normal quantile."""
    a = (
        -3.969683028665376e01,
        2.209460984245205e02,
        -2.759285104469687e02,
        1.383577518672690e02,
        -3.066479806614716e01,
        2.506628277459239e00,
    )
    b = (
        -5.447609879822406e01,
        1.615858368580409e02,
        -1.556989798598866e02,
        6.680131188771972e01,
        -1.328068155288572e01,
    )
    c = (
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e00,
        -2.549732539343734e00,
        4.374664141464968e00,
        2.938163982698783e00,
    )
    d = (
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e00,
        3.754408661907416e00,
    )
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    if p > 1.0 - p_low:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
        ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    )


def z_quantile(alpha):
    """Two-sided normal critical value z with P(|Z| <= z) = 1 - alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    z = _Z_TABLE.get(alpha)
    if z is None:
        z = _acklam_ppf(1.0 - alpha / 2.0)
    return z


def _check_se_inputs(sigma2, fhat, n, h):
    if not np.isfinite(h) or h <= 0.0:
        raise ValidationError(f"h must be positive and finite, got {h!r}")
    if n < 1:
        raise ValidationError("n must be at least 1")
    if not np.isfinite(fhat) or fhat <= 0.0:
        raise DegenerateInputError(f"density estimate must be positive, got {fhat!r}")
    if not np.isfinite(sigma2) or sigma2 < 0.0:
        raise DegenerateInputError(f"variance estimate must be nonnegative, got {sigma2!r}")


def se_iid(r_k, d, sigma2_at_x, fhat_at_x, n, h):
    """Standard error ignoring cluster structure:
    sqrt(r_k^d sigma2 / (n h^d fhat))."""
    _check_se_inputs(sigma2_at_x, fhat_at_x, n, h)
    return math.sqrt(r_k**d * sigma2_at_x / (n * h**d * fhat_at_x))


def se_cr(r_k, d, sigma2_tilde_at_x, fhat_at_x, n, h):
    """The iid formula with the jackknife variance estimate."""
    return se_iid(r_k, d, sigma2_tilde_at_x, fhat_at_x, n, h)


def se_lambda(first_term, cov, fhat_at_x, n, h, d):
    """Standard error with the within-cluster covariance contribution.

    Parameters
    ----------
    first_term : float
        r_k^d sigma2_tilde / fhat, the sigma2 part of the variance bracket.
    cov : CovTermEstimate
        "nonparametric": value is lambda r_k^d_cls f2hat sigma_pair and is
        divided by fhat^2 here.  "parametric_compromise": value is already
        the complete second bracket term.
    Returns
    -------
    (float, bool)
        The standard error, and True when a negative bracket was clamped
        to the sigma2 term alone.
    """
    if not np.isfinite(h) or h <= 0.0:
        raise ValidationError(f"h must be positive and finite, got {h!r}")
    if n < 1:
        raise ValidationError("n must be at least 1")
    if not np.isfinite(fhat_at_x) or fhat_at_x <= 0.0:
        raise DegenerateInputError(f"density estimate must be positive, got {fhat_at_x!r}")
    if first_term < 0.0:
        raise DegenerateInputError("the sigma2 bracket term is negative")
    if cov.method == "nonparametric":
        second = cov.value / fhat_at_x**2
    elif cov.method == "parametric_compromise":
        second = cov.value
    else:
        raise ValidationError(f"unknown covariance method {cov.method!r}")
    bracket = first_term + second
    clamped = False
    if bracket < 0.0:
        bracket = first_term
        clamped = True
    return math.sqrt(bracket / (n * h**d)), clamped


def make_band(
    ds,
    kernel,
    estimator,
    x,
    h_m,
    h_f=None,
    h_sigma2=None,
    alpha=0.05,
    cov_method="parametric_compromise",
    b=None,
    fitted_residuals=None,
    jackknife_residuals=None,
    pilot_residuals=None,
):
    """Assemble the three confidence intervals at one point.

    The regression fit uses ``h_m``; the density uses ``h_f`` (default:
    the normal-reference bandwidth); squared residuals are smoothed at
    ``h_sigma2`` (default ``h_f``); the pair density of the nonparametric
    covariance path uses ``b`` (default ``h_f``).  The lambda factor is
    pinned to ``h_m``.

    Residual sets are computed on demand over exactly the observations
    with positive weight in the relevant windows; precomputed sets can be
    passed to avoid repeated work across evaluation points.

    Returns
    -------
    InferenceBand
    """
    if estimator not in ("nw", "ll"):
        raise ValidationError(f"estimator must be 'nw' or 'll', got {estimator!r}")
    if cov_method not in _COV_METHODS:
        raise ValidationError(f"cov_method must be one of {_COV_METHODS}")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (ds.d,):
        raise ValidationError(f"x must have shape ({ds.d},)")
    if h_f is None:
        h_f = reference_h(ds)
    if h_sigma2 is None:
        h_sigma2 = h_f
    if b is None:
        b = h_f
    fit = (nw_fit if estimator == "nw" else ll_fit)(ds, kernel, h_m, x)
    fhat = density(ds, kernel, h_f, x).value
    if fhat <= 0.0:
        raise DegenerateInputError(
            f"density estimate is zero at x={x.tolist()}; intervals undefined"
        )
    reach = kernel.support_radius
    mask_sigma = np.all(np.abs(ds.x_pooled - x[None, :]) <= h_sigma2 * reach, axis=1)
    x_ind = x[: ds.d_ind]
    x_cls = x[ds.d_ind :] if ds.d_cls else None
    need_pairs = cov_method == "nonparametric"
    if need_pairs:
        mask_pair = np.all(
            np.abs(ds.x_pooled[:, : ds.d_ind] - x_ind[None, :]) <= b * reach, axis=1
        )
        if ds.d_cls:
            mask_pair &= np.all(
                np.abs(ds.x_pooled[:, ds.d_ind :] - x_cls[None, :]) <= b * reach, axis=1
            )
    else:
        mask_pair = np.zeros(ds.n, dtype=bool)
    if fitted_residuals is None:
        fitted_residuals = residuals(
            ds, kernel, h_m, estimator, "fitted", at=mask_sigma | mask_pair
        )
    if jackknife_residuals is None:
        jackknife_residuals = residuals(
            ds, kernel, h_m, estimator, "jackknife", at=mask_sigma
        )
    sigma2_hat = cond_var_nw(ds, kernel, h_sigma2, x, fitted_residuals)
    sigma2_tilde = cond_var_nw(ds, kernel, h_sigma2, x, jackknife_residuals)
    summary = size_summary(ds)
    lam = lambda_hat(summary, h_m, ds.d_ind)
    no_pairs = summary.max_size < 2
    if no_pairs:
        cov = CovTermEstimate(value=0.0, method=cov_method)
    elif cov_method == "parametric_compromise":
        cov = parametric_cov_term(ds, kernel, lam, x_ind, fhat, pilot_residuals)
    else:
        f2 = joint_density_pairs(ds, kernel, b, x_ind, x_cls)
        pair_cov = cond_cov_nw(ds, kernel, b, x_ind, x_cls, fitted_residuals)
        cov = CovTermEstimate(
            value=lam.value * kernel.r_k**ds.d_cls * f2.value * pair_cov.value,
            method="nonparametric",
        )
    d = ds.d
    n = ds.n
    se0 = se_iid(kernel.r_k, d, sigma2_hat, fhat, n, h_m)
    se1 = se_cr(kernel.r_k, d, sigma2_tilde, fhat, n, h_m)
    first = kernel.r_k**d * sigma2_tilde / fhat
    se2, clamped = se_lambda(first, cov, fhat, n, h_m, d)
    warnings = ()
    if no_pairs:
        warnings = (
            "every cluster has a single member; the within-cluster covariance "
            "term is zero and the lambda interval equals the cluster-robust one",
        )
    if clamped:
        warnings = (
            "within-cluster covariance term made the variance bracket negative; "
            "the lambda interval was clamped to the sigma2 term",
        )
    z = z_quantile(alpha)
    m = fit.estimate
    return InferenceBand(
        x=x,
        estimate=m,
        se_iid=se0,
        se_cr=se1,
        se_lambda=se2,
        ci=(m - z * se0, m + z * se0),
        ci_cr=(m - z * se1, m + z * se1),
        ci_lambda=(m - z * se2, m + z * se2),
        alpha=alpha,
        h_m=h_m,
        h_f=h_f,
        h_sigma2=h_sigma2,
        lambda_value=lam.value,
        cov_method=cov_method,
        warnings=warnings,
    )
