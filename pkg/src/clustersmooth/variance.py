"""Conditional variance, within-cluster covariance, and the lambda factor.

The asymptotic variance of a kernel regression fit under cluster sampling
has two pieces: the familiar term driven by the conditional variance
sigma2(x), and a within-cluster term that survives whenever cluster sizes
are nontrivial relative to the bandwidth.  The second piece is scaled by

    lambda = ((1/n) sum_g n_g^2) h^d_ind,

the mean squared cluster size times the individual-coordinate bandwidth
volume.  Its covariance factor sigma(x, x), the conditional covariance of
the errors of two distinct members of the same cluster at the diagonal,
can be estimated fully nonparametrically (a pair-level Nadaraya-Watson
ratio with a stacked product kernel) or through a parametric compromise:
a bivariate normal model for within-cluster regressor pairs supplies the
density ratio, and a global quartic pilot (refit with each cluster left
out) supplies the residual cross-products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    EmptyWindowError,
    SingularDesignError,
    ValidationError,
)
from .kernels import eval_univariate
from .bandwidth import global_poly4

__all__ = [
    "CovTermEstimate",
    "LambdaHat",
    "MvnMoments",
    "cond_var_nw",
    "cond_cov_nw",
    "lambda_hat",
    "pair_moments",
    "conditional_normal_density",
    "parametric_cov_term",
]


@dataclass(frozen=True)
class CovTermEstimate:
    """A within-cluster covariance quantity for the variance formula.

    ``method`` fixes what ``value`` is:

    - "nonparametric": the pair-level Nadaraya-Watson estimate of
      sigma(x, x) alone; the caller scales it by lambda, the kernel
      roughness, and the pair density, and divides by fhat^2.
    - "parametric_compromise": the entire within-cluster variance
      contribution lambda r_k^d_cls (mean pair residual product)
      p(x_ind | x_ind) / fhat, ready to add to the sigma2 term.
    """

    value: float
    method: str


@dataclass(frozen=True)
class LambdaHat:
    """The cluster-size scale factor lambda = mean_sq_size * h^d_ind."""

    value: float
    h_used: float
    mean_sq_size: float


@dataclass(frozen=True)
class MvnMoments:
    """Pooled moments of ordered within-cluster regressor pairs.

    ``mu1`` and ``sigma11`` are the mean and variance of the first pair
    slot; ``sigma12`` is the cross-covariance between slots.  Computed over
    all ordered pairs (j, l), j != l, with the pair count as denominator,
    so ``sigma12`` is symmetric by construction.
    """

    mu1: np.ndarray
    sigma11: np.ndarray
    sigma12: np.ndarray
    n_pairs_ordered: int


def _finite_at_weights(values, w, what):
    used = w > 0
    if not np.all(np.isfinite(values[used])):
        raise ValidationError(
            f"{what} is missing (NaN) at an observation with positive kernel weight; "
            "widen the residual evaluation mask"
        )


def cond_var_nw(ds, kernel, h, x, residual_set):
    """Nadaraya-Watson smooth of squared residuals at ``x``.

    Estimates sigma2(x), the conditional variance, by the kernel-weighted
    average of e_gj^2.  Nonnegative by construction.

    Raises
    ------
    EmptyWindowError
        If no observation carries weight at ``x``.
    ValidationError
        If a residual is missing where its weight is positive.
    """
    if not np.isfinite(h) or h <= 0.0:
        raise ValidationError(f"h must be positive and finite, got {h!r}")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (ds.d,):
        raise ValidationError(f"x must have shape ({ds.d},)")
    u = (ds.x_pooled - x[None, :]) / h
    w = eval_univariate(kernel, u)
    if w.ndim > 1:
        w = np.prod(w, axis=1)
    s0 = float(w.sum())
    if np.count_nonzero(w > 0) == 0 or s0 <= 0.0:
        raise EmptyWindowError(f"no kernel weight at x={x.tolist()} with h={h}")
    e = residual_set.values
    _finite_at_weights(e, w, "a residual")
    e2 = np.where(w > 0, e * e, 0.0)
    return float((w * e2).sum()) / s0


def cond_cov_nw(ds, kernel, b, x_ind, x_cls, residual_set):
    """Pair-level Nadaraya-Watson estimate of sigma(x, x).

    Every within-cluster pair (j, l), j < l, contributes the stacked
    product-kernel weight K((x_gj_ind - x_ind)/b, (x_gl_ind - x_ind)/b,
    (x_g_cls - x_cls)/b) and the response e_gj e_gl; the estimate is the
    ratio of the weighted response sum to the weight sum and may be
    negative.

    Returns
    -------
    CovTermEstimate
        method "nonparametric".

    Raises
    ------
    EmptyWindowError
        If no pair carries positive weight.
    DegenerateInputError
        If no cluster has two or more members.
    """
    if not np.isfinite(b) or b <= 0.0:
        raise ValidationError(f"b must be positive and finite, got {b!r}")
    x_ind = np.atleast_1d(np.asarray(x_ind, dtype=np.float64))
    if x_ind.shape != (ds.d_ind,):
        raise ValidationError(f"x_ind must have shape ({ds.d_ind},)")
    if ds.d_cls > 0:
        x_cls = np.atleast_1d(np.asarray(x_cls, dtype=np.float64))
        if x_cls.shape != (ds.d_cls,):
            raise ValidationError(f"x_cls must have shape ({ds.d_cls},)")
    target = np.concatenate(
        [x_ind, x_ind, x_cls if ds.d_cls else np.empty(0)]
    )
    e = residual_set.values
    num = 0.0
    den = 0.0
    n_pairs = 0
    any_pos = False
    offset = 0
    for c in ds.clusters:
        n_g = c.y.shape[0]
        if n_g < 2:
            offset += n_g
            continue
        jj, ll = np.triu_indices(n_g, k=1)
        n_pairs += jj.size
        xi = c.x[:, : ds.d_ind]
        stacked = np.concatenate(
            [xi[jj], xi[ll], np.repeat(c.x[:1, ds.d_ind :], jj.size, axis=0)], axis=1
        )
        w = np.prod(eval_univariate(kernel, (stacked - target[None, :]) / b), axis=1)
        pos = w > 0
        if np.any(pos):
            any_pos = True
            eg = e[offset : offset + n_g]
            both = np.where(pos, eg[jj] * eg[ll], 0.0)
            if not np.all(np.isfinite(both[pos])):
                raise ValidationError(
                    "a residual is missing (NaN) at a pair with positive kernel "
                    "weight; widen the residual evaluation mask"
                )
            num += float((w * both).sum())
            den += float(w.sum())
        offset += n_g
    if n_pairs == 0:
        raise DegenerateInputError("no cluster has two or more members")
    if not any_pos or den <= 0.0:
        raise EmptyWindowError(
            f"no within-cluster pair carries kernel weight at x={x_ind.tolist()} with b={b}"
        )
    return CovTermEstimate(value=num / den, method="nonparametric")


def lambda_hat(summary, h, d_ind):
    """The lambda factor ((1/n) sum_g n_g^2) h^d_ind.

    Parameters
    ----------
    summary : ClusterSizeSummary
    h : float
        The regression bandwidth.
    d_ind : int
        Number of individual-level coordinates.
    """
    if summary.n < 1:
        raise ValidationError("lambda requires a nonempty dataset")
    if not np.isfinite(h) or h <= 0.0:
        raise ValidationError(f"h must be positive and finite, got {h!r}")
    mean_sq = summary.sum_sq_sizes / summary.n
    return LambdaHat(value=mean_sq * h**d_ind, h_used=h, mean_sq_size=mean_sq)


def pair_moments(ds):
    """Sample moments of ordered within-cluster regressor pairs.

    Uses individual-level coordinates only.  Every ordered pair (j, l),
    j != l, contributes once; the divisor is the ordered pair count with
    no degrees-of-freedom correction.

    Raises
    ------
    DegenerateInputError
        If no cluster has two or more members.
    """
    d = ds.d_ind
    n_ord = 0
    sum1 = np.zeros(d)
    for c in ds.clusters:
        n_g = c.y.shape[0]
        if n_g < 2:
            continue
        xi = c.x[:, :d]
        n_ord += n_g * (n_g - 1)
        sum1 += (n_g - 1) * xi.sum(axis=0)
    if n_ord == 0:
        raise DegenerateInputError("no cluster has two or more members")
    mu1 = sum1 / n_ord
    s11 = np.zeros((d, d))
    s12 = np.zeros((d, d))
    for c in ds.clusters:
        n_g = c.y.shape[0]
        if n_g < 2:
            continue
        z = c.x[:, :d] - mu1[None, :]
        s11 += (n_g - 1) * (z.T @ z)
        tot = z.sum(axis=0)
        s12 += np.outer(tot, tot) - z.T @ z
    return MvnMoments(
        mu1=mu1, sigma11=s11 / n_ord, sigma12=s12 / n_ord, n_pairs_ordered=n_ord
    )


def conditional_normal_density(moments, x_ind):
    """Density of the first pair slot at ``x_ind`` given the second equals
    ``x_ind``, under a joint normal with the pooled pair moments.

    The joint is N((mu1, mu1), [[S11, S12], [S12, S11]]); conditioning
    gives mean mu1 + S12 S11^-1 (x - mu1) and covariance
    S11 - S12 S11^-1 S12.

    Raises
    ------
    SingularDesignError
        If S11 or the conditional covariance is singular.
    """
    x = np.atleast_1d(np.asarray(x_ind, dtype=np.float64))
    d = moments.mu1.shape[0]
    if x.shape != (d,):
        raise ValidationError(f"x_ind must have shape ({d},)")
    s11 = moments.sigma11
    s12 = moments.sigma12
    try:
        sol = np.linalg.solve(s11, s12)
    except np.linalg.LinAlgError:
        raise SingularDesignError("pair moment matrix S11 is singular") from None
    cmean = moments.mu1 + (x - moments.mu1) @ sol
    ccov = s11 - s12 @ sol
    ccov = 0.5 * (ccov + ccov.T)
    try:
        chol = np.linalg.cholesky(ccov)
    except np.linalg.LinAlgError:
        raise SingularDesignError("conditional pair covariance is singular") from None
    z = np.linalg.solve(chol, x - cmean)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    quad = float(z @ z)
    return float(np.exp(-0.5 * (d * np.log(2.0 * np.pi) + logdet + quad)))


def parametric_cov_term(ds, kernel, lam, x_ind, fhat, pilot_residuals=None):
    """Within-cluster variance contribution via the parametric compromise.

    value = lambda * r_k^d_cls * ((1/N) sum_g sum_(j<l) e_gj e_gl)
            * p(x_ind | x_ind) / fhat,

    where N counts unordered within-cluster pairs, the residuals come from
    a global quartic pilot refit with each cluster left out, and p is the
    conditional normal density from the pooled pair moments.  The result is
    the complete second term of the variance bracket (it may be negative;
    interval assembly clamps).

    Parameters
    ----------
    lam : LambdaHat
    fhat : float
        Marginal density estimate at the evaluation point, > 0.
    pilot_residuals : numpy.ndarray, optional
        Precomputed per-observation pilot residuals in pooled order.  By
        default they are computed here (requires d = 1).

    Returns
    -------
    CovTermEstimate
        method "parametric_compromise".
    """
    if not np.isfinite(fhat) or fhat <= 0.0:
        raise DegenerateInputError(f"fhat must be positive, got {fhat!r}")
    if pilot_residuals is None:
        if ds.d != 1:
            raise ValidationError(
                "the quartic pilot needs exactly one regressor; pass pilot_residuals"
            )
        pilot_residuals = np.empty(ds.n)
        x = ds.x_pooled[:, 0]
        for g in range(ds.g_count):
            pf = global_poly4(ds, exclude=g)
            own = ds.row_cluster == g
            pilot_residuals[own] = ds.y_pooled[own] - pf(x[own])
    else:
        pilot_residuals = np.asarray(pilot_residuals, dtype=np.float64)
        if pilot_residuals.shape != (ds.n,):
            raise ValidationError(f"pilot_residuals must have shape ({ds.n},)")
    cross = 0.0
    n_pairs = 0
    offset = 0
    for c in ds.clusters:
        n_g = c.y.shape[0]
        if n_g >= 2:
            e = pilot_residuals[offset : offset + n_g]
            tot = e.sum()
            cross += 0.5 * (tot * tot - float(e @ e))
            n_pairs += n_g * (n_g - 1) // 2
        offset += n_g
    if n_pairs == 0:
        raise DegenerateInputError("no cluster has two or more members")
    mean_cross = cross / n_pairs
    dens = conditional_normal_density(pair_moments(ds), x_ind)
    value = lam.value * kernel.r_k**ds.d_cls * mean_cross * dens / fhat
    return CovTermEstimate(value=value, method="parametric_compromise")
