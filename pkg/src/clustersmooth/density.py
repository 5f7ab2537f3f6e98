"""Kernel density estimators for cluster-sampled data.

The marginal estimator pools all observations; cluster structure is
irrelevant to its value.  The pair density estimator targets the joint
density of two distinct members of the same cluster, evaluated on the
diagonal of the individual coordinates, and is the density object behind
the within-cluster covariance term of the variance formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ValidationError
from .kernels import eval_univariate

__all__ = ["DensityEstimate", "PairDensityEstimate", "density", "joint_density_pairs"]


@dataclass(frozen=True)
class DensityEstimate:
    """A density value (or vector of values) at the evaluation point(s)."""

    x: np.ndarray
    value: object
    h: float


@dataclass(frozen=True)
class PairDensityEstimate:
    """Within-cluster pair density on the diagonal, with the pair count."""

    value: float
    n_pairs: int
    b: float


def _check_h(h, name="h"):
    if not np.isfinite(h) or h <= 0.0:
        raise ValidationError(f"{name} must be positive and finite, got {h!r}")


def _weights_nd(kernel, x_obs, x, h):
    """Product-kernel weights prod_q k((x_obs[:, q] - x[q]) / h), shape (n,)."""
    u = (x_obs - x[None, :]) / h
    w = eval_univariate(kernel, u)
    if w.ndim == 1:
        return w
    return np.prod(w, axis=1)


def density(ds, kernel, h, x):
    """Pooled kernel density estimate.

    Computes (1 / (n h^d)) sum_g sum_j K((x_gj - x) / h) with the product
    kernel K.  Clusters play no role beyond contributing their rows.

    Parameters
    ----------
    ds : ClusteredDataset
    kernel : KernelSpec
    h : float
        Bandwidth, > 0.
    x : array_like
        One point of shape (d,) (a scalar is fine when d = 1) or a batch
        of shape (m, d).

    Returns
    -------
    DensityEstimate
        ``value`` is a float for one point, an (m,) array for a batch.
    """
    _check_h(h)
    if ds.is_empty or ds.n == 0:
        raise ValidationError("cannot estimate a density from an empty dataset")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim <= 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != ds.d:
        raise ValidationError(f"evaluation point has {pts.shape[1]} coords, data has {ds.d}")
    scale = ds.n * h**ds.d
    xo = ds.x_pooled
    vals = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        vals[i] = _weights_nd(kernel, xo, pts[i], h).sum() / scale
    return DensityEstimate(x=x, value=float(vals[0]) if single else vals, h=h)


def joint_density_pairs(ds, kernel, b, x_ind, x_cls=None):
    """Within-cluster pair density at the diagonal point.

    For each cluster with at least two members, every unordered pair
    (j, l), j < l, contributes one product-kernel weight on the stacked
    vector (x_gj_ind, x_gl_ind, x_g_cls) - (x_ind, x_ind, x_cls), a single
    kernel in 2 d_ind + d_cls coordinates (the cluster-level block enters
    once, not twice).  The estimate divides the weight sum by
    N b^(2 d_ind + d_cls) where N is the number of contributing pairs.

    Parameters
    ----------
    ds : ClusteredDataset
    kernel : KernelSpec
    b : float
        Pair-density bandwidth, > 0.
    x_ind : array_like, shape (d_ind,)
        Individual-coordinate evaluation point (used for both pair slots).
    x_cls : array_like, shape (d_cls,), optional
        Cluster-coordinate evaluation point; required when d_cls > 0.

    Returns
    -------
    PairDensityEstimate

    Raises
    ------
    DegenerateInputError
        If no cluster has two or more members.
    """
    _check_h(b, "b")
    x_ind = np.atleast_1d(np.asarray(x_ind, dtype=np.float64))
    if x_ind.shape != (ds.d_ind,):
        raise ValidationError(f"x_ind must have shape ({ds.d_ind},)")
    if ds.d_cls > 0:
        if x_cls is None:
            raise ValidationError("x_cls is required when the dataset has cluster-level coords")
        x_cls = np.atleast_1d(np.asarray(x_cls, dtype=np.float64))
        if x_cls.shape != (ds.d_cls,):
            raise ValidationError(f"x_cls must have shape ({ds.d_cls},)")
    target = np.concatenate([x_ind, x_ind, x_cls if ds.d_cls else np.empty(0)])
    total = 0.0
    n_pairs = 0
    for c in ds.clusters:
        n_g = c.y.shape[0]
        if n_g < 2:
            continue
        jj, ll = np.triu_indices(n_g, k=1)
        xi = c.x[:, : ds.d_ind]
        stacked = np.concatenate(
            [xi[jj], xi[ll], np.repeat(c.x[:1, ds.d_ind :], jj.size, axis=0)], axis=1
        )
        u = (stacked - target[None, :]) / b
        w = eval_univariate(kernel, u)
        total += float(np.prod(w, axis=1).sum())
        n_pairs += jj.size
    if n_pairs == 0:
        raise DegenerateInputError("no cluster has two or more members; pair density undefined")
    dim = 2 * ds.d_ind + ds.d_cls
    return PairDensityEstimate(value=total / (n_pairs * b**dim), n_pairs=n_pairs, b=b)
