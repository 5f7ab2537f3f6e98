"""Nadaraya-Watson and local-linear regression.

Both estimators share product-kernel weights w_i = K((x_i - x) / h).  The
Nadaraya-Watson value is the weighted mean of the responses; the local
linear value is the intercept of the weighted least squares fit of y on
(1, x_i - x).  Bandwidth normalizations cancel in both and are omitted.

A local-linear design can degenerate (all window mass on one point, or
collinear regressors).  The rule everywhere: equilibrate the columns of
the (d+1) x (d+1) normal matrix, measure its reciprocal condition number,
and below ``RCOND_MIN`` drop the linear terms and return the
Nadaraya-Watson value instead.  For d = 1 the condition number has a
closed form and the whole fit is vectorized over evaluation points; the
general-d path factorizes the small system by SVD.  Both paths apply the
identical threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import drop_cluster
from .errors import EmptyWindowError, ValidationError
from .kernels import eval_univariate

__all__ = ["FitResult", "ResidualSet", "nw_fit", "ll_fit", "fit_loco", "fit_grid", "residuals"]

RCOND_MIN = 1e-12

_ESTIMATORS = ("nw", "ll")


@dataclass(frozen=True)
class FitResult:
    """A point fit.

    ``denom`` is the sum of kernel weights for Nadaraya-Watson and the
    reciprocal condition diagnostic of the equilibrated local design for
    local linear.  ``n_effective`` counts observations with nonzero weight.
    ``used_fallback`` is True when a degenerate local-linear design fell
    back to the Nadaraya-Watson value.
    """

    x: np.ndarray
    estimate: float
    denom: float
    n_effective: int
    used_fallback: bool = False


@dataclass(frozen=True)
class ResidualSet:
    """Per-observation residuals in pooled row order.

    ``variant`` is "fitted" (full-sample fit at each observation) or
    "jackknife" (fit excluding the observation's own cluster).  Entries
    outside the requested evaluation mask are NaN.
    """

    values: np.ndarray
    variant: str
    estimator: str
    h: float


def _check_estimator(estimator):
    if estimator not in _ESTIMATORS:
        raise ValidationError(f"estimator must be one of {_ESTIMATORS}, got {estimator!r}")


def _check_ready(ds, h):
    if ds.is_empty or ds.n == 0:
        raise ValidationError("cannot fit on an empty dataset")
    if not np.isfinite(h) or h <= 0.0:
        raise ValidationError(f"h must be positive and finite, got {h!r}")


def _describe_obs(ds, pooled_idx):
    g = int(ds.row_cluster[pooled_idx])
    start = int(np.sum(ds.cluster_sizes[:g]))
    return f"cluster {ds.clusters[g].id!r} member {pooled_idx - start}"


# ---------------------------------------------------------------------------
# d = 1 fast path: sorted pooled arrays, vectorized window statistics.
# ---------------------------------------------------------------------------


class _SortedPool:
    """Pooled rows of a one-regressor dataset sorted by x."""

    def __init__(self, ds):
        if ds.d != 1:
            raise ValidationError("sorted-pool path requires exactly one regressor")
        x = ds.x_pooled[:, 0]
        order = np.argsort(x, kind="stable")
        self.x = x[order]
        self.y = ds.y_pooled[order]
        self.cluster = ds.row_cluster[order]
        self.order = order

    def complement(self, g):
        keep = self.cluster != g
        return self.x[keep], self.y[keep]


def _seg_sum(a, offs, counts):
    """Sum ``a`` over contiguous segments [offs[i], offs[i+1]).

    Zero-length segments yield exact zeros.  Summation is per segment (no
    running total across segments), so precision does not degrade with the
    number of windows.
    """
    if a.size == 0:
        return np.zeros(counts.size)
    padded = np.concatenate([a, [0.0]])
    out = np.add.reduceat(padded, offs[:-1])
    out[counts == 0] = 0.0
    return out


def _seg_extrema(yv, w, offs, counts):
    """Per-segment min and max of ``yv`` over entries with positive weight.

    Segments without any positive weight yield (+inf, -inf).
    """
    if yv.size == 0:
        lo = np.full(counts.size, np.inf)
        return lo, -lo
    lo_src = np.concatenate([np.where(w > 0, yv, np.inf), [np.inf]])
    hi_src = np.concatenate([np.where(w > 0, yv, -np.inf), [-np.inf]])
    lo = np.minimum.reduceat(lo_src, offs[:-1])
    hi = np.maximum.reduceat(hi_src, offs[:-1])
    lo[counts == 0] = np.inf
    hi[counts == 0] = -np.inf
    return lo, hi


def _window_stats(x_eval, xs, ys, kernel, h, return_extrema=False):
    """Weighted local moments at each evaluation point.

    Returns s0, s1, s2, t0, t1, n_pos where s_k = sum w (x_i - x)^k,
    t_k = sum w (x_i - x)^k y_i over the kernel window, and n_pos counts
    strictly positive weights.  With ``return_extrema`` the tuple also
    carries the in-window response min and max, the clamp range for
    Nadaraya-Watson values.
    """
    reach = kernel.support_radius * h
    lo = np.searchsorted(xs, x_eval - reach, side="left")
    hi = np.searchsorted(xs, x_eval + reach, side="right")
    counts = hi - lo
    offs = np.concatenate([[0], np.cumsum(counts)])
    total = int(offs[-1])
    pos = np.arange(total) - np.repeat(offs[:-1], counts)
    idx = pos + np.repeat(lo, counts)
    dx = xs[idx] - np.repeat(x_eval, counts)
    w = eval_univariate(kernel, dx / h)
    yv = ys[idx]
    wdx = w * dx
    s0 = _seg_sum(w, offs, counts)
    s1 = _seg_sum(wdx, offs, counts)
    s2 = _seg_sum(wdx * dx, offs, counts)
    t0 = _seg_sum(w * yv, offs, counts)
    t1 = _seg_sum(wdx * yv, offs, counts)
    n_pos = _seg_sum((w > 0).astype(np.float64), offs, counts).astype(np.int64)
    if not return_extrema:
        return s0, s1, s2, t0, t1, n_pos
    y_lo, y_hi = _seg_extrema(yv, w, offs, counts)
    return s0, s1, s2, t0, t1, n_pos, y_lo, y_hi


def _rcond_2x2(s0, s1, s2):
    """Reciprocal condition number of [[s0, s1], [s1, s2]] after scaling
    each column to unit Euclidean norm.

    With unit columns the Frobenius norm squared is exactly 2, so the
    singular values are 1 +- sqrt(1 - det^2); the returned ratio uses the
    cancellation-free form |det| / (1 + sqrt(1 - det^2)).
    """
    c1 = np.hypot(s0, s1)
    c2 = np.hypot(s1, s2)
    good = (c1 > 0) & (c2 > 0)
    det = np.zeros_like(np.asarray(s0, dtype=np.float64))
    det_val = np.divide(s0 * s2 - s1 * s1, c1 * c2, out=det, where=good)
    det_val = np.clip(det_val, -1.0, 1.0)
    disc = np.sqrt(1.0 - det_val * det_val)
    return np.abs(det_val) / (1.0 + disc)


def _estimates_from_stats(stats, estimator):
    """Point estimates from window statistics.

    Returns (estimates, n_pos, diagnostic, fallback) where empty windows
    hold NaN estimates and must be handled by the caller.
    """
    s0, s1, s2, t0, t1, n_pos = stats[:6]
    nonempty = n_pos > 0
    nw = np.full(s0.shape, np.nan)
    np.divide(t0, s0, out=nw, where=nonempty)
    if len(stats) == 8:
        # The ratio t0/s0 can round an ulp outside the response range; the
        # clamp keeps a weighted mean of a constant exactly that constant.
        nw = np.clip(nw, stats[6], stats[7])
    if estimator == "nw":
        return nw, n_pos, s0, np.zeros(s0.shape, dtype=bool)
    rcond = _rcond_2x2(s0, s1, s2)
    det = s0 * s2 - s1 * s1
    ll = np.full(s0.shape, np.nan)
    ok = nonempty & (rcond >= RCOND_MIN)
    np.divide(s2 * t0 - s1 * t1, det, out=ll, where=ok)
    fallback = nonempty & ~ok
    ll[fallback] = nw[fallback]
    return ll, n_pos, rcond, fallback


# ---------------------------------------------------------------------------
# General-d single-point fits.
# ---------------------------------------------------------------------------


def _point_weights(ds, kernel, h, x):
    u = (ds.x_pooled - x[None, :]) / h
    w = eval_univariate(kernel, u)
    if w.ndim > 1:
        w = np.prod(w, axis=1)
    return w


def _as_point(ds, x):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (ds.d,):
        raise ValidationError(f"evaluation point must have shape ({ds.d},), got {x.shape}")
    return x


def nw_fit(ds, kernel, h, x):
    """Nadaraya-Watson fit at one point.

    The estimate is sum_i w_i y_i / sum_i w_i with product-kernel weights,
    a convex combination of in-window responses.

    Raises
    ------
    EmptyWindowError
        If no observation carries positive weight at ``x``.
    """
    _check_ready(ds, h)
    x = _as_point(ds, x)
    w = _point_weights(ds, kernel, h, x)
    pos = w > 0
    n_eff = int(np.count_nonzero(pos))
    s0 = float(w.sum())
    if n_eff == 0 or s0 <= 0.0:
        raise EmptyWindowError(f"no kernel weight at x={x.tolist()} with h={h}")
    yw = ds.y_pooled[pos]
    # The ratio can round an ulp outside the response range; the clamp keeps
    # a weighted mean of a constant exactly that constant.
    est = float(np.clip(float(w @ ds.y_pooled) / s0, yw.min(), yw.max()))
    return FitResult(x=x, estimate=est, denom=s0, n_effective=n_eff)


def ll_fit(ds, kernel, h, x):
    """Local linear fit at one point.

    Solves the weighted least squares problem of y on (1, x_i - x) and
    returns the intercept.  Below ``RCOND_MIN`` reciprocal condition of the
    equilibrated normal matrix, falls back to the Nadaraya-Watson value.

    Raises
    ------
    EmptyWindowError
        If no observation carries positive weight at ``x``.
    """
    _check_ready(ds, h)
    x = _as_point(ds, x)
    w = _point_weights(ds, kernel, h, x)
    n_eff = int(np.count_nonzero(w > 0))
    if n_eff == 0 or w.sum() <= 0.0:
        raise EmptyWindowError(f"no kernel weight at x={x.tolist()} with h={h}")
    if ds.d == 1:
        dx = ds.x_pooled[:, 0] - x[0]
        wdx = w * dx
        yw = ds.y_pooled[w > 0]
        stats = (
            np.array([w.sum()]),
            np.array([wdx.sum()]),
            np.array([(wdx * dx).sum()]),
            np.array([(w * ds.y_pooled).sum()]),
            np.array([(wdx * ds.y_pooled).sum()]),
            np.array([n_eff]),
            np.array([yw.min()]),
            np.array([yw.max()]),
        )
        est, _, diag, fb = _estimates_from_stats(stats, "ll")
        return FitResult(
            x=x,
            estimate=float(est[0]),
            denom=float(diag[0]),
            n_effective=n_eff,
            used_fallback=bool(fb[0]),
        )
    z = np.hstack([np.ones((ds.n, 1)), ds.x_pooled - x[None, :]])
    wz = w[:, None] * z
    a = z.T @ wz
    b = z.T @ (w * ds.y_pooled)
    col = np.linalg.norm(a, axis=0)
    if np.any(col == 0.0):
        rcond = 0.0
    else:
        a_eq = a / col[None, :]
        u, s, vt = np.linalg.svd(a_eq)
        rcond = float(s[-1] / s[0]) if s[0] > 0 else 0.0
    if rcond < RCOND_MIN:
        nw = nw_fit(ds, kernel, h, x)
        return FitResult(
            x=x, estimate=nw.estimate, denom=rcond, n_effective=n_eff, used_fallback=True
        )
    gamma = vt.T @ ((u.T @ b) / s)
    beta = gamma / col
    return FitResult(x=x, estimate=float(beta[0]), denom=rcond, n_effective=n_eff)


def fit_loco(ds, kernel, h, x, g, estimator):
    """Fit at ``x`` with cluster index ``g`` left out.

    Identical by construction to fitting on ``drop_cluster(ds, g)``.
    """
    _check_estimator(estimator)
    reduced = drop_cluster(ds, g)
    if reduced.is_empty:
        raise EmptyWindowError(f"dropping cluster index {g} leaves no data")
    fit = nw_fit if estimator == "nw" else ll_fit
    return fit(reduced, kernel, h, x)


def fit_grid(ds, kernel, h, xs, estimator):
    """Point estimates on a batch of evaluation points.

    Parameters
    ----------
    xs : array_like
        Shape (m,) when d = 1, else (m, d).

    Returns
    -------
    numpy.ndarray
        Shape (m,) estimates.

    Raises
    ------
    EmptyWindowError
        Naming the first evaluation point with an empty window.
    """
    _check_ready(ds, h)
    _check_estimator(estimator)
    xs = np.asarray(xs, dtype=np.float64)
    if ds.d == 1:
        pts = xs.reshape(-1)
        pool = _SortedPool(ds)
        stats = _window_stats(pts, pool.x, pool.y, kernel, h, return_extrema=True)
        est, n_pos, _, _ = _estimates_from_stats(stats, estimator)
        if np.any(n_pos == 0):
            bad = pts[int(np.argmin(n_pos))]
            raise EmptyWindowError(f"no kernel weight at x={bad} with h={h}")
        return est
    pts = np.atleast_2d(xs)
    fit = nw_fit if estimator == "nw" else ll_fit
    return np.array([fit(ds, kernel, h, p).estimate for p in pts])


def residuals(ds, kernel, h, estimator, variant, at=None):
    """Per-observation regression residuals.

    Parameters
    ----------
    variant : str
        "fitted": y_gj minus the full-sample fit at x_gj.
        "jackknife": y_gj minus the fit excluding cluster g entirely.
    at : array_like of bool, shape (n,), optional
        Pooled-order mask of observations to evaluate.  Rows outside the
        mask are NaN in the result.  Default: all rows.  Restricting the
        mask is how callers avoid forcing fits at observations far from
        any evaluation point of interest (for example deep in a tail
        where a small bandwidth window is empty).

    Returns
    -------
    ResidualSet

    Raises
    ------
    EmptyWindowError
        Naming the observation whose window is empty.
    """
    _check_ready(ds, h)
    _check_estimator(estimator)
    if variant not in ("fitted", "jackknife"):
        raise ValidationError(f"variant must be 'fitted' or 'jackknife', got {variant!r}")
    n = ds.n
    if at is None:
        mask = np.ones(n, dtype=bool)
    else:
        mask = np.asarray(at, dtype=bool)
        if mask.shape != (n,):
            raise ValidationError(f"mask must have shape ({n},)")
    vals = np.full(n, np.nan)
    if ds.d == 1:
        pool = _SortedPool(ds)
        if variant == "fitted":
            take = mask[pool.order]
            pts = pool.x[take]
            stats = _window_stats(pts, pool.x, pool.y, kernel, h, return_extrema=True)
            est, n_pos, _, _ = _estimates_from_stats(stats, estimator)
            if np.any(n_pos == 0):
                bad = pool.order[take][int(np.argmin(n_pos))]
                raise EmptyWindowError(
                    f"empty window at {_describe_obs(ds, bad)} with h={h}"
                )
            vals[pool.order[take]] = pool.y[take] - est
        else:
            for g in range(ds.g_count):
                own = pool.cluster == g
                take = own & mask[pool.order]
                if not np.any(take):
                    continue
                xs, ys = pool.complement(g)
                if xs.size == 0:
                    raise EmptyWindowError(
                        f"cluster {ds.clusters[g].id!r} is the whole sample; "
                        "jackknife residuals undefined"
                    )
                stats = _window_stats(pool.x[take], xs, ys, kernel, h, return_extrema=True)
                est, n_pos, _, _ = _estimates_from_stats(stats, estimator)
                if np.any(n_pos == 0):
                    bad = pool.order[take][int(np.argmin(n_pos))]
                    raise EmptyWindowError(
                        f"empty leave-cluster-out window at {_describe_obs(ds, bad)} "
                        f"with h={h}"
                    )
                vals[pool.order[take]] = pool.y[take] - est
        return ResidualSet(values=vals, variant=variant, estimator=estimator, h=h)
    fit = nw_fit if estimator == "nw" else ll_fit
    for i in np.flatnonzero(mask):
        xi = ds.x_pooled[i]
        try:
            if variant == "fitted":
                r = fit(ds, kernel, h, xi)
            else:
                r = fit_loco(ds, kernel, h, xi, int(ds.row_cluster[i]), estimator)
        except EmptyWindowError as exc:
            raise EmptyWindowError(f"{exc} at {_describe_obs(ds, i)}") from None
        vals[i] = ds.y_pooled[i] - r.estimate
    return ResidualSet(values=vals, variant=variant, estimator=estimator, h=h)
