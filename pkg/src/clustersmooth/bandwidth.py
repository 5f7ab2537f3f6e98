"""Bandwidth selection: plug-in rules and cross-validation.

Two families are provided, each in a classical and a cluster-robust form.

Plug-in ("rule of thumb"): a global quartic polynomial pilot fit yields a
curvature estimate B and a residual-variance estimate sigma2; plugging
both into the asymptotic-IMSE-optimal formula gives

    h0 = (d r_k^d sigma2 / (4 B))^(1/(d+4)) n^(-1/(d+4)).

The cluster-robust variant refits the pilot polynomial with each cluster
left out, so a cluster's own observations never shape the pilot values
used at its rows.

Cross-validation: CV(h) averages squared prediction errors over a weight
window, predicting each observation either without its own row
("loo") or without its entire cluster ("cluster", the robust form):

    CV(h) = (1/n) sum_g sum_j (y_gj - m_excl(x_gj, h))^2 w(x_gj).

The selector minimizes CV(h) on a 50-point logarithmic grid spanning
[h_pilot / 3, 3 h_pilot] around the cluster-robust plug-in value, breaking
ties toward the smaller bandwidth.  Grid points where prediction fails
(an empty window somewhere) are recorded as NaN in the trace and skipped;
selection fails only if every grid point fails.

Undersmoothing for confidence intervals multiplies a mean-square-optimal
bandwidth by n^(1/5) n^(-2/7), trading the n^(-1/5) rate for n^(-2/7) so
that smoothing bias vanishes faster than the interval length.

When (max cluster size) x h^d_ind exceeds 1, the asymptotic order
underlying the plug-in formula is suspect for this cluster-size profile
and reports carry a warning recommending the cluster-robust
cross-validated choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BandwidthSearchError,
    DegenerateInputError,
    EmptyWindowError,
    SingularDesignError,
    ValidationError,
)
from .kernels import eval_univariate
from .regress import (
    _SortedPool,
    _check_estimator,
    _describe_obs,
    _estimates_from_stats,
    _window_stats,
)

__all__ = [
    "WeightWindow",
    "BandwidthReport",
    "PolyFit4",
    "aimse_h0",
    "global_poly4",
    "rot",
    "cv_criterion",
    "cv_select",
    "default_grid",
    "undersmooth",
    "reference_h",
    "GRID_SIZE",
    "GRID_SPAN",
]

GRID_SIZE = 50
GRID_SPAN = 3.0
_GUARD_LIMIT = 1.0


@dataclass(frozen=True)
class WeightWindow:
    """A coordinate-wise box weight w(x) = 1{lo <= x <= hi}.

    ``lo`` and ``hi`` are scalars for one regressor or (d,) arrays.
    """

    lo: object
    hi: object

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        if lo.shape != hi.shape:
            raise ValidationError("window lo and hi must have matching shapes")
        if not np.all(lo < hi):
            raise ValidationError("window requires lo < hi in every coordinate")

    def _bounds(self):
        return (
            np.atleast_1d(np.asarray(self.lo, dtype=np.float64)),
            np.atleast_1d(np.asarray(self.hi, dtype=np.float64)),
        )

    def integral(self):
        """Volume of the box, the integral of w."""
        lo, hi = self._bounds()
        return float(np.prod(hi - lo))

    def contains(self, x):
        """Indicator w(x).

        A scalar or a (d,) point yields a bool; an (m, d) batch yields an
        (m,) bool array.  For one regressor a 1-d input is read as a batch
        of scalars.
        """
        lo, hi = self._bounds()
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            return bool((x >= lo[0]) & (x <= hi[0]))
        if x.ndim == 1:
            if lo.size == 1:
                return (x >= lo[0]) & (x <= hi[0])
            if x.shape != lo.shape:
                raise ValidationError(f"point must have shape {lo.shape}, got {x.shape}")
            return bool(np.all((x >= lo) & (x <= hi)))
        return np.all((x >= lo[None, :]) & (x <= hi[None, :]), axis=1)


@dataclass(frozen=True)
class BandwidthReport:
    """A selected bandwidth with its provenance.

    ``trace`` holds (h, criterion) pairs for grid searches (empty for
    plug-in rules); failed grid points carry NaN criteria.  ``components``
    holds (B, sigma2) for plug-in rules.  ``warnings`` carries advisory
    messages, never errors.
    """

    method: str
    h: float
    trace: tuple = ()
    components: tuple = ()
    warnings: tuple = ()


@dataclass(frozen=True)
class PolyFit4:
    """A quartic polynomial fit y ~ sum_k a_k x^k, coefficients ascending."""

    coef: np.ndarray

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=np.float64), self.coef)

    def half_second_deriv(self, x):
        """m''(x) / 2 = a2 + 3 a3 x + 6 a4 x^2."""
        x = np.asarray(x, dtype=np.float64)
        return self.coef[2] + 3.0 * self.coef[3] * x + 6.0 * self.coef[4] * x * x


def aimse_h0(b_bar, sigma2_bar, r_k, d, n):
    """Asymptotic-IMSE-optimal bandwidth.

    h0 = (d r_k^d sigma2_bar / (4 b_bar))^(1/(d+4)) n^(-1/(d+4)).

    Raises
    ------
    DegenerateInputError
        If ``b_bar`` or ``sigma2_bar`` is not strictly positive.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    if not (np.isfinite(b_bar) and b_bar > 0.0):
        raise DegenerateInputError(f"curvature term must be positive, got {b_bar!r}")
    if not (np.isfinite(sigma2_bar) and sigma2_bar > 0.0):
        raise DegenerateInputError(f"variance term must be positive, got {sigma2_bar!r}")
    p = 1.0 / (d + 4.0)
    return (d * r_k**d * sigma2_bar / (4.0 * b_bar)) ** p * float(n) ** -p


def global_poly4(ds, exclude=None):
    """Ordinary least squares quartic fit of y on x (one regressor).

    Parameters
    ----------
    exclude : int, optional
        Cluster index to leave out of the fit.

    Raises
    ------
    SingularDesignError
        If the design is rank deficient (fewer than five distinct x).
    """
    if ds.d != 1:
        raise ValidationError("the quartic pilot requires exactly one regressor")
    if exclude is None:
        keep = slice(None)
    else:
        keep = ds.row_cluster != exclude
    x = ds.x_pooled[keep, 0]
    y = ds.y_pooled[keep]
    if x.size < 5:
        raise SingularDesignError("quartic pilot needs at least five observations")
    v = np.vander(x, 5, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(v, y, rcond=None)
    if rank < 5:
        raise SingularDesignError("quartic pilot design is rank deficient")
    return PolyFit4(coef=coef)


def _guard_warnings(ds, h):
    m = int(ds.cluster_sizes.max()) if ds.g_count else 0
    if m * h**ds.d_ind > _GUARD_LIMIT:
        return (
            f"largest cluster size {m} times h^d_ind = {m * h**ds.d_ind:.3g} exceeds "
            f"{_GUARD_LIMIT:g}; the mean-square-optimal bandwidth order is suspect for "
            "this cluster-size profile, prefer the cluster-robust cross-validated "
            "bandwidth",
        )
    return ()


def rot(ds, kernel, window, cluster_robust=True):
    """Plug-in bandwidth from a global quartic pilot (one regressor).

    B is the window-weighted average of (pilot''(x_gj) / 2)^2 and sigma2 is
    the mean squared pilot residual times the window volume; both feed
    ``aimse_h0``.  With ``cluster_robust`` the pilot used at cluster g's
    rows is refit with cluster g left out; otherwise one full-sample pilot
    serves everywhere.

    Returns
    -------
    BandwidthReport
        method "cr-rot" or "rot", components (B, sigma2).
    """
    if ds.is_empty:
        raise ValidationError("cannot select a bandwidth on an empty dataset")
    if ds.d != 1:
        raise ValidationError("plug-in selection requires exactly one regressor")
    x = ds.x_pooled[:, 0]
    y = ds.y_pooled
    w = window.contains(ds.x_pooled).astype(np.float64)
    curv = np.empty(ds.n)
    resid = np.empty(ds.n)
    if cluster_robust:
        for g in range(ds.g_count):
            pf = global_poly4(ds, exclude=g)
            own = ds.row_cluster == g
            curv[own] = pf.half_second_deriv(x[own])
            resid[own] = y[own] - pf(x[own])
    else:
        pf = global_poly4(ds)
        curv[:] = pf.half_second_deriv(x)
        resid[:] = y - pf(x)
    b_bar = float(np.mean(curv * curv * w))
    sigma2_bar = float(np.mean(resid * resid)) * window.integral()
    h = aimse_h0(b_bar, sigma2_bar, kernel.r_k, 1, ds.n)
    return BandwidthReport(
        method="cr-rot" if cluster_robust else "rot",
        h=h,
        components=(b_bar, sigma2_bar),
        warnings=_guard_warnings(ds, h),
    )


class _CvWorkspace:
    """Precomputed state for evaluating CV(h) at many bandwidths.

    One regressor only.  Builds the sorted pool once, the per-cluster
    complement arrays once ("cluster" mode), and the in-window evaluation
    sets once; every ``value`` call then costs only window statistics.
    """

    def __init__(self, ds, window, mode):
        if ds.d != 1:
            raise ValidationError("vectorized cross-validation requires one regressor")
        if mode not in ("cluster", "loo"):
            raise ValidationError(f"mode must be 'cluster' or 'loo', got {mode!r}")
        self.ds = ds
        self.mode = mode
        self.n = ds.n
        self.pool = _SortedPool(ds)
        self.in_w = window.contains(self.pool.x[:, None])
        if mode == "cluster":
            self.parts = []
            for g in range(ds.g_count):
                own = (self.pool.cluster == g) & self.in_w
                if not np.any(own):
                    continue
                xs, ys = self.pool.complement(g)
                self.parts.append(
                    (g, self.pool.x[own], self.pool.y[own], self.pool.order[own], xs, ys)
                )

    def value(self, kernel, h, estimator):
        sse = 0.0
        if self.mode == "cluster":
            for g, xe, ye, orig, xs, ys in self.parts:
                if xs.size == 0:
                    raise EmptyWindowError(
                        f"cluster {self.ds.clusters[g].id!r} is the whole sample"
                    )
                stats = _window_stats(xe, xs, ys, kernel, h)
                est, n_pos, _, _ = _estimates_from_stats(stats, estimator)
                if np.any(n_pos == 0):
                    bad = orig[int(np.argmin(n_pos))]
                    raise EmptyWindowError(
                        f"empty leave-cluster-out window at "
                        f"{_describe_obs(self.ds, bad)} with h={h}"
                    )
                d = ye - est
                sse += float(d @ d)
            return sse / self.n
        xe = self.pool.x[self.in_w]
        ye = self.pool.y[self.in_w]
        orig = self.pool.order[self.in_w]
        s0, s1, s2, t0, t1, n_pos = _window_stats(xe, self.pool.x, self.pool.y, kernel, h)
        k0 = float(eval_univariate(kernel, 0.0))
        s0 = s0 - k0
        t0 = t0 - k0 * ye
        n_pos = n_pos - 1
        est, n_pos, _, _ = _estimates_from_stats((s0, s1, s2, t0, t1, n_pos), estimator)
        if np.any(n_pos <= 0):
            bad = orig[int(np.argmin(n_pos))]
            raise EmptyWindowError(
                f"empty leave-one-out window at {_describe_obs(self.ds, bad)} with h={h}"
            )
        d = ye - est
        return float(d @ d) / self.n


def cv_criterion(ds, kernel, h, estimator, window, mode="cluster"):
    """Cross-validation criterion at one bandwidth.

    CV(h) = (1/n) sum_gj (y_gj - m_excl(x_gj, h))^2 w(x_gj) where the
    prediction at x_gj excludes cluster g ("cluster" mode) or just row gj
    ("loo" mode).  Observations outside the window contribute zero and
    are never predicted.

    Raises
    ------
    EmptyWindowError
        Naming the first in-window observation without a prediction.
    """
    _check_estimator(estimator)
    if not np.isfinite(h) or h <= 0.0:
        raise ValidationError(f"h must be positive and finite, got {h!r}")
    return _CvWorkspace(ds, window, mode).value(kernel, h, estimator)


def default_grid(h_pilot, size=GRID_SIZE, span=GRID_SPAN):
    """Logarithmic bandwidth grid of ``size`` points on
    [h_pilot / span, span * h_pilot]."""
    if not np.isfinite(h_pilot) or h_pilot <= 0.0:
        raise ValidationError(f"pilot bandwidth must be positive, got {h_pilot!r}")
    return np.geomspace(h_pilot / span, span * h_pilot, size)


def cv_select(ds, kernel, estimator, window, mode="cluster", grid=None):
    """Minimize the cross-validation criterion over a bandwidth grid.

    Without an explicit ``grid``, a 50-point logarithmic grid spanning
    [h/3, 3h] around the cluster-robust plug-in bandwidth is used.  Grid
    points whose criterion cannot be evaluated enter the trace with a NaN
    criterion and are skipped; ties break toward the smaller bandwidth.

    Returns
    -------
    BandwidthReport
        method "cr-cv" (cluster mode) or "cv" (loo mode), full trace.

    Raises
    ------
    BandwidthSearchError
        If every grid point fails.
    """
    _check_estimator(estimator)
    if grid is None:
        grid = default_grid(rot(ds, kernel, window, cluster_robust=True).h)
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if grid.size == 0:
        raise ValidationError("bandwidth grid is empty")
    ws = _CvWorkspace(ds, window, mode)
    values = np.full(grid.size, np.nan)
    first_err = None
    for i, h in enumerate(grid):
        try:
            values[i] = ws.value(kernel, float(h), estimator)
        except EmptyWindowError as exc:
            if first_err is None:
                first_err = str(exc)
    if not np.any(np.isfinite(values)):
        raise BandwidthSearchError(
            f"criterion failed at every grid bandwidth; first failure: {first_err}"
        )
    best = int(np.nanargmin(values))
    h_star = float(grid[best])
    return BandwidthReport(
        method="cr-cv" if mode == "cluster" else "cv",
        h=h_star,
        trace=tuple(zip(grid.tolist(), values.tolist())),
        warnings=_guard_warnings(ds, h_star),
    )


def undersmooth(h, n):
    """Shrink a mean-square-optimal bandwidth for confidence intervals.

    Returns h * n^(1/5) * n^(-2/7), moving the rate from n^(-1/5) to
    n^(-2/7).
    """
    if not np.isfinite(h) or h <= 0.0:
        raise ValidationError(f"h must be positive and finite, got {h!r}")
    if n < 1:
        raise ValidationError("n must be at least 1")
    return h * float(n) ** (1.0 / 5.0 - 2.0 / 7.0)


def reference_h(ds):
    """Normal-reference bandwidth 1.049 S_x n^(-1/5) (one regressor).

    S_x is the pooled sample standard deviation (ddof 1).

    Raises
    ------
    DegenerateInputError
        If the regressor has zero variance.
    """
    if ds.is_empty:
        raise ValidationError("cannot compute a reference bandwidth on an empty dataset")
    if ds.d != 1:
        raise ValidationError("the reference bandwidth requires exactly one regressor")
    if ds.n < 2:
        raise DegenerateInputError("need at least two observations for a spread estimate")
    s = float(np.std(ds.x_pooled[:, 0], ddof=1))
    if s <= 0.0:
        raise DegenerateInputError("regressor spread is zero; reference bandwidth undefined")
    return 1.049 * s * ds.n ** (-1.0 / 5.0)
