"""Simulation harness: data generating processes and experiment drivers.

Two regression designs are built in.  Both draw cluster-correlated
regressors and errors from latent standard normals,

    x_gj = sqrt(rho_x) a_g + sqrt(1 - rho_x) b_gj   (marginal N(0, 1)),
    e_gj = sqrt(rho_e) c_g + sqrt(1 - rho_e) u_gj   (marginal N(0, 1)),

so rho_x and rho_e are the within-cluster correlations of the regressor
and the error.  Setup 1 is a homoskedastic bumpy mean,

    y = sin(2 x) + 2 exp(-16 x^2) + 0.5 e,

evaluated over the window [-1.5, 1.5].  Setup 2 is heteroskedastic,

    y = x sin(2 pi x) + (2 + cos(2 pi x)) / 5 * e,

over [0, 1].  Cluster g < G has ``n_g_base`` members and the last cluster
``n_g_last``, so one oversized cluster is a single knob.

Randomness is counter-based: replication r of a run seeded with s draws
from a Philox stream keyed by (s, r), in a fixed draw order (cluster
latents for x, member latents for x, cluster latents for e, member
latents for e).  Results are therefore identical for any worker count,
and replications can run in any order on any process pool.

Experiment drivers return per-method means with Monte Carlo standard
errors.  Replication failures are caught, counted, and excluded; a run
where every replication fails raises.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .bandwidth import cv_criterion, cv_select, default_grid, reference_h, rot, undersmooth
from .bandwidth import WeightWindow
from .dataset import from_arrays
from .errors import DataError, NumericError, ValidationError
from .inference import make_band
from .kernels import EPANECHNIKOV
from .regress import _SortedPool, _estimates_from_stats, _window_stats, fit_grid

__all__ = [
    "DgpConfig",
    "AseRecord",
    "AseTable",
    "CoverageRecord",
    "CoverageTable",
    "CvDecomposition",
    "generate",
    "true_m",
    "true_m_prime",
    "true_second_deriv",
    "noise_scale",
    "true_bias",
    "default_window",
    "run_ase_table",
    "run_coverage_table",
    "cv_decomposition",
    "sigma2_bar_w",
]

ASE_GRID_SIZE = 50
_METHODS = ("rot", "cr-rot", "cv", "cr-cv")
_BIAS_MODES = ("undersmooth", "infeasible_correct", "ignore")


@dataclass(frozen=True)
class DgpConfig:
    """A simulation cell.

    ``n_g_last`` sizes the final cluster; setting it above ``n_g_base``
    reproduces the one-oversized-cluster designs.
    """

    setup: int
    g_count: int
    n_g_base: int
    n_g_last: int
    rho_x: float
    rho_e: float
    seed: int

    def __post_init__(self):
        if self.setup not in (1, 2):
            raise ValidationError(f"setup must be 1 or 2, got {self.setup!r}")
        if self.g_count < 1:
            raise ValidationError("g_count must be at least 1")
        if self.n_g_base < 1 or self.n_g_last < 1:
            raise ValidationError("cluster sizes must be at least 1")
        for name in ("rho_x", "rho_e"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1), got {v!r}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in an unsigned 64-bit integer")

    @property
    def n(self):
        return self.n_g_base * (self.g_count - 1) + self.n_g_last


def generate(config, replication):
    """Draw one replication as a ClusteredDataset.

    Deterministic in (config.seed, replication) alone.
    """
    if not 0 <= replication < 2**64:
        raise ValidationError("replication index must fit in an unsigned 64-bit integer")
    rng = np.random.Generator(
        np.random.Philox(key=np.array([config.seed, replication], dtype=np.uint64))
    )
    g = config.g_count
    sizes = np.full(g, config.n_g_base, dtype=np.int64)
    sizes[-1] = config.n_g_last
    n = int(sizes.sum())
    a = rng.standard_normal(g)
    b = rng.standard_normal(n)
    c = rng.standard_normal(g)
    u = rng.standard_normal(n)
    gidx = np.repeat(np.arange(g), sizes)
    x = math.sqrt(config.rho_x) * a[gidx] + math.sqrt(1.0 - config.rho_x) * b
    e = math.sqrt(config.rho_e) * c[gidx] + math.sqrt(1.0 - config.rho_e) * u
    y = true_m(config.setup, x) + noise_scale(config.setup, x) * e
    ids = np.repeat(np.array([f"g{i + 1:05d}" for i in range(g)]), sizes)
    return from_arrays(ids, y, x, d_cls=0)


def true_m(setup, x):
    """The regression function of the chosen setup."""
    x = np.asarray(x, dtype=np.float64)
    if setup == 1:
        return np.sin(2.0 * x) + 2.0 * np.exp(-16.0 * x * x)
    if setup == 2:
        return x * np.sin(2.0 * np.pi * x)
    raise ValidationError(f"setup must be 1 or 2, got {setup!r}")


def true_m_prime(setup, x):
    """First derivative of the regression function."""
    x = np.asarray(x, dtype=np.float64)
    if setup == 1:
        return 2.0 * np.cos(2.0 * x) - 64.0 * x * np.exp(-16.0 * x * x)
    if setup == 2:
        t = 2.0 * np.pi * x
        return np.sin(t) + 2.0 * np.pi * x * np.cos(t)
    raise ValidationError(f"setup must be 1 or 2, got {setup!r}")


def true_second_deriv(setup, x):
    """Second derivative of the regression function."""
    x = np.asarray(x, dtype=np.float64)
    if setup == 1:
        return -4.0 * np.sin(2.0 * x) + (2048.0 * x * x - 64.0) * np.exp(-16.0 * x * x)
    if setup == 2:
        t = 2.0 * np.pi * x
        return 4.0 * np.pi * np.cos(t) - 4.0 * np.pi**2 * x * np.sin(t)
    raise ValidationError(f"setup must be 1 or 2, got {setup!r}")


def noise_scale(setup, x):
    """Conditional standard deviation of the error term."""
    x = np.asarray(x, dtype=np.float64)
    if setup == 1:
        return np.full_like(x, 0.5)
    if setup == 2:
        return (2.0 + np.cos(2.0 * np.pi * x)) / 5.0
    raise ValidationError(f"setup must be 1 or 2, got {setup!r}")


def true_bias(setup, estimator, x, kernel=EPANECHNIKOV):
    """Leading smoothing-bias constant B(x).

    The first-order bias of the fit at x is h^2 B(x).  For the local
    linear estimator B = (kappa2 / 2) m''; the Nadaraya-Watson constant
    adds the density-gradient term kappa2 (f'/f) m', which for the
    standard normal regressor marginal is -x kappa2 m'.
    """
    mdd = true_second_deriv(setup, x)
    if estimator == "ll":
        return 0.5 * kernel.kappa2 * mdd
    if estimator == "nw":
        x = np.asarray(x, dtype=np.float64)
        return kernel.kappa2 * (0.5 * mdd - x * true_m_prime(setup, x))
    raise ValidationError(f"estimator must be 'nw' or 'll', got {estimator!r}")


def default_window(setup):
    """The evaluation window of each setup."""
    if setup == 1:
        return WeightWindow(lo=-1.5, hi=1.5)
    if setup == 2:
        return WeightWindow(lo=0.0, hi=1.0)
    raise ValidationError(f"setup must be 1 or 2, got {setup!r}")


# ---------------------------------------------------------------------------
# Replication drivers.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AseRecord:
    """Average-squared-error summary for one bandwidth method."""

    method: str
    mean_ase: float
    se_ase: float
    mean_h: float
    se_h: float
    reps_used: int
    n_failed: int


@dataclass(frozen=True)
class AseTable:
    records: tuple
    reps: int
    n_failed: int
    failures: tuple


@dataclass(frozen=True)
class CoverageRecord:
    """Empirical coverage and mean length for one interval variant."""

    variant: str
    coverage: float
    se_coverage: float
    mean_length: float
    se_length: float
    reps_used: int
    n_failed: int


@dataclass(frozen=True)
class CoverageTable:
    records: tuple
    mean_h_cv: float
    mean_h_m: float
    mean_lambda: float
    n_clamped: int
    reps: int
    n_failed: int
    failures: tuple


@dataclass(frozen=True)
class CvDecomposition:
    """Paired comparison of mean CV(h) against sigma2_bar_w + IMSE(h).

    ``mean_diff`` averages CV_r - IMSE_r over replications; under the
    decomposition its expectation is ``sigma2_bar_w``.
    """

    h: float
    mean_cv: float
    se_cv: float
    sigma2_bar_w: float
    mean_imse: float
    mean_diff: float
    se_diff: float
    reps_used: int
    n_failed: int
    failures: tuple


def _mean_se(vals):
    vals = np.asarray(vals, dtype=np.float64)
    m = float(vals.mean())
    if vals.size < 2:
        return m, float("nan")
    return m, float(vals.std(ddof=1) / math.sqrt(vals.size))


def _run_reps(worker, reps, workers):
    if reps < 1:
        raise ValidationError("reps must be at least 1")
    if workers <= 1:
        results = [worker(r) for r in range(reps)]
    else:
        chunk = max(1, reps // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(worker, range(reps), chunksize=chunk))
    ok = [payload for tag, payload in results if tag == "ok"]
    failures = tuple(payload for tag, payload in results if tag == "fail")
    if not ok:
        raise NumericError(
            f"every replication failed; first failure: {failures[0]}"
        )
    return ok, failures


def _ase_rep(job, r):
    config, kernel, estimator, methods, window, grid_n = job
    try:
        ds = generate(config, r)
        pilot = rot(ds, kernel, window, cluster_robust=True)
        grid = default_grid(pilot.h)
        reports = {}
        if "rot" in methods:
            reports["rot"] = rot(ds, kernel, window, cluster_robust=False)
        if "cr-rot" in methods:
            reports["cr-rot"] = pilot
        if "cv" in methods:
            reports["cv"] = cv_select(ds, kernel, estimator, window, mode="loo", grid=grid)
        if "cr-cv" in methods:
            reports["cr-cv"] = cv_select(
                ds, kernel, estimator, window, mode="cluster", grid=grid
            )
        lo, hi = float(np.atleast_1d(window.lo)[0]), float(np.atleast_1d(window.hi)[0])
        pts = np.linspace(lo, hi, grid_n)
        truth = true_m(config.setup, pts)
        out = {}
        for name in methods:
            h = reports[name].h
            est = fit_grid(ds, kernel, h, pts, estimator)
            out[name] = (h, float(np.mean((est - truth) ** 2)))
        return "ok", out
    except (NumericError, DataError) as exc:
        return "fail", f"replication {r}: {exc}"


def run_ase_table(
    config,
    reps,
    methods=_METHODS,
    estimator="ll",
    kernel=EPANECHNIKOV,
    window=None,
    grid_n=ASE_GRID_SIZE,
    workers=1,
):
    """Average squared error of the fit under each bandwidth method.

    Each replication selects bandwidths on fresh data, fits on ``grid_n``
    evenly spaced points spanning the setup window, and records the
    average squared deviation from the truth.  Cross-validation methods
    share one 50-point logarithmic grid pivoted on the cluster-robust
    plug-in value.

    Returns
    -------
    AseTable
        One AseRecord per method with Monte Carlo standard errors.
    """
    for m in methods:
        if m not in _METHODS:
            raise ValidationError(f"unknown method {m!r}; choose from {_METHODS}")
    if window is None:
        window = default_window(config.setup)
    job = (config, kernel, estimator, tuple(methods), window, grid_n)
    ok, failures = _run_reps(partial(_ase_rep, job), reps, workers)
    records = []
    for name in methods:
        hs = [d[name][0] for d in ok]
        ases = [d[name][1] for d in ok]
        mean_ase, se_ase = _mean_se(ases)
        mean_h, se_h = _mean_se(hs)
        records.append(
            AseRecord(
                method=name,
                mean_ase=mean_ase,
                se_ase=se_ase,
                mean_h=mean_h,
                se_h=se_h,
                reps_used=len(ok),
                n_failed=len(failures),
            )
        )
    return AseTable(
        records=tuple(records), reps=reps, n_failed=len(failures), failures=failures
    )


def _coverage_rep(job, r):
    (config, kernel, estimator, window, x_eval, bias_mode, alpha, cov_method) = job
    try:
        ds = generate(config, r)
        pilot = rot(ds, kernel, window, cluster_robust=True)
        sel = cv_select(
            ds, kernel, estimator, window, mode="cluster", grid=default_grid(pilot.h)
        )
        h_m = undersmooth(sel.h, ds.n) if bias_mode == "undersmooth" else sel.h
        h_f = reference_h(ds)
        band = make_band(
            ds,
            kernel,
            estimator,
            x_eval,
            h_m=h_m,
            h_f=h_f,
            h_sigma2=h_f,
            alpha=alpha,
            cov_method=cov_method,
        )
        shift = 0.0
        if bias_mode == "infeasible_correct":
            shift = h_m**2 * float(true_bias(config.setup, estimator, x_eval, kernel))
        m0 = float(true_m(config.setup, x_eval))
        out = {}
        for name, (lo, hi) in (
            ("iid", band.ci),
            ("cr", band.ci_cr),
            ("lambda", band.ci_lambda),
        ):
            out[name] = (1.0 if lo - shift <= m0 <= hi - shift else 0.0, hi - lo)
        return "ok", (out, sel.h, h_m, band.lambda_value, 1 if band.warnings else 0)
    except (NumericError, DataError) as exc:
        return "fail", f"replication {r}: {exc}"


def run_coverage_table(
    config,
    x_eval,
    reps,
    estimator="ll",
    kernel=EPANECHNIKOV,
    bias_mode="undersmooth",
    alpha=0.05,
    cov_method="parametric_compromise",
    window=None,
    workers=1,
):
    """Empirical coverage of the three interval variants at one point.

    Each replication selects the cluster-robust cross-validated bandwidth,
    optionally undersmooths it for the fit ("undersmooth" mode), builds
    the three intervals, and checks whether they cover the truth.
    "infeasible_correct" mode instead recenters the intervals by the
    analytic leading bias h^2 B(x) (only available in simulations);
    "ignore" does neither.

    Returns
    -------
    CoverageTable
        One CoverageRecord per variant ("iid", "cr", "lambda").
    """
    if bias_mode not in _BIAS_MODES:
        raise ValidationError(f"bias_mode must be one of {_BIAS_MODES}, got {bias_mode!r}")
    if window is None:
        window = default_window(config.setup)
    job = (config, kernel, estimator, window, float(x_eval), bias_mode, alpha, cov_method)
    ok, failures = _run_reps(partial(_coverage_rep, job), reps, workers)
    records = []
    for name in ("iid", "cr", "lambda"):
        hits = np.array([o[0][name][0] for o in ok])
        lengths = np.array([o[0][name][1] for o in ok])
        p = float(hits.mean())
        se_p = math.sqrt(p * (1.0 - p) / hits.size) if hits.size else float("nan")
        mean_len, se_len = _mean_se(lengths)
        records.append(
            CoverageRecord(
                variant=name,
                coverage=p,
                se_coverage=se_p,
                mean_length=mean_len,
                se_length=se_len,
                reps_used=len(ok),
                n_failed=len(failures),
            )
        )
    return CoverageTable(
        records=tuple(records),
        mean_h_cv=float(np.mean([o[1] for o in ok])),
        mean_h_m=float(np.mean([o[2] for o in ok])),
        mean_lambda=float(np.mean([o[3] for o in ok])),
        n_clamped=int(sum(o[4] for o in ok)),
        reps=reps,
        n_failed=len(failures),
        failures=failures,
    )


def _normal_pdf(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def sigma2_bar_w(setup, window):
    """E[sigma2(x) w(x)] under the standard normal regressor marginal."""
    lo, hi = float(np.atleast_1d(window.lo)[0]), float(np.atleast_1d(window.hi)[0])
    if setup == 1:
        return 0.25 * (_normal_cdf(hi) - _normal_cdf(lo))
    grid = np.linspace(lo, hi, 200001)
    g = noise_scale(setup, grid) ** 2 * _normal_pdf(grid)
    return float(np.trapezoid(g, grid))


def _cvdecomp_rep(job, r):
    config, kernel, estimator, window, h, nodes = job
    try:
        ds = generate(config, r)
        cv_val = cv_criterion(ds, kernel, h, estimator, window, mode="cluster")
        lo, hi = float(np.atleast_1d(window.lo)[0]), float(np.atleast_1d(window.hi)[0])
        pts = np.linspace(lo, hi, nodes)
        truth = true_m(config.setup, pts)
        dens = _normal_pdf(pts)
        pool = _SortedPool(ds)
        sizes = ds.cluster_sizes
        imse = 0.0
        for g in range(ds.g_count):
            xs, ys = pool.complement(g)
            stats = _window_stats(pts, xs, ys, kernel, h)
            est, n_pos, _, _ = _estimates_from_stats(stats, estimator)
            if np.any(n_pos == 0):
                raise NumericError(
                    f"empty window on the integration grid with cluster {g} left out"
                )
            integrand = (truth - est) ** 2 * dens
            imse += (sizes[g] / ds.n) * float(np.trapezoid(integrand, pts))
        return "ok", (cv_val, imse)
    except (NumericError, DataError) as exc:
        return "fail", f"replication {r}: {exc}"


def cv_decomposition(
    config,
    h,
    reps,
    estimator="nw",
    kernel=EPANECHNIKOV,
    window=None,
    nodes=1001,
    workers=1,
):
    """Check the expected-CV decomposition at a fixed bandwidth.

    For each replication the criterion CV(h) (cluster mode) is paired with
    the plug-in evaluation of the integrated squared error of the
    leave-one-cluster-out fit,

        IMSE_r = sum_g (n_g / n) integral (m - m_excl_g)^2 f w,

    integrated on a ``nodes``-point trapezoid grid against the known
    standard normal regressor density.  The decomposition says
    E[CV(h)] = sigma2_bar_w + E[IMSE_r], so the paired differences
    CV_r - IMSE_r average to ``sigma2_bar_w`` up to Monte Carlo noise.

    Returns
    -------
    CvDecomposition
    """
    if window is None:
        window = default_window(config.setup)
    job = (config, kernel, estimator, window, float(h), int(nodes))
    ok, failures = _run_reps(partial(_cvdecomp_rep, job), reps, workers)
    cvs = np.array([o[0] for o in ok])
    imses = np.array([o[1] for o in ok])
    mean_cv, se_cv = _mean_se(cvs)
    mean_diff, se_diff = _mean_se(cvs - imses)
    return CvDecomposition(
        h=float(h),
        mean_cv=mean_cv,
        se_cv=se_cv,
        sigma2_bar_w=sigma2_bar_w(config.setup, window),
        mean_imse=float(imses.mean()),
        mean_diff=mean_diff,
        se_diff=se_diff,
        reps_used=len(ok),
        n_failed=len(failures),
        failures=failures,
    )
