"""Command line interface.

Subcommands: ``density``, ``fit``, ``bandwidth``, ``infer``, ``simulate``.
Numeric output goes to stdout (or ``--out``) as CSV with 17 significant
digits, or as JSON with ``--format json``; diagnostics go to stderr.

Exit codes: 0 success, 1 usage error, 2 data error (missing columns,
unparsable cells, validation failures), 3 numerical failure (empty
windows, singular designs, failed bandwidth searches).

A ``--config FILE`` of ``key=value`` lines (keys are long option names
without the leading dashes, ``#`` comments allowed) supplies defaults for
its subcommand; explicit flags override the file.  Unknown keys are
rejected.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import __version__
from .bandwidth import (
    WeightWindow,
    cv_select,
    default_grid,
    reference_h,
    rot,
    undersmooth,
)
from .dataset import ColumnSchema, load_csv
from .density import density
from .errors import DataError, NumericError, UsageError, ValidationError
from .inference import make_band
from .kernels import KERNELS, get_kernel
from .montecarlo import (
    DgpConfig,
    cv_decomposition,
    default_window,
    run_ase_table,
    run_coverage_table,
)
from .regress import ll_fit, nw_fit

_COMMANDS = ("density", "fit", "bandwidth", "infer", "simulate")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _add_data_flags(p):
    p.add_argument("--input", required=True, help="CSV file of observations")
    p.add_argument("--cluster-col", default="cluster")
    p.add_argument("--y-col", default="y")
    p.add_argument("--x-cols", default="x", help="comma-separated individual-level columns")
    p.add_argument(
        "--cluster-level-cols", default="", help="comma-separated cluster-level columns"
    )


def _add_common_flags(p):
    p.add_argument("--kernel", default="epanechnikov", choices=sorted(KERNELS))
    p.add_argument("--format", default="csv", choices=("csv", "json"))
    p.add_argument("--out", default="-", help="output path, - for stdout")
    p.add_argument("--config", default=None, help="key=value defaults file")


def _add_eval_flags(p):
    p.add_argument("--grid", default=None, help="lo:hi:n evaluation grid (one regressor)")
    p.add_argument(
        "--points", default=None,
        help="evaluation points 'x1,x2;y1,y2', semicolons between points",
    )
    p.add_argument("--at-data", action="store_true", help="evaluate at every observation")


def _build_parser():
    parser = _Parser(prog="clustersmooth", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    p = sub.add_parser("density", help="kernel density estimates")
    _add_data_flags(p)
    _add_common_flags(p)
    _add_eval_flags(p)
    p.add_argument("--h", default="reference", help="bandwidth, or 'reference'")
    subparsers["density"] = p

    p = sub.add_parser("fit", help="kernel regression fits")
    _add_data_flags(p)
    _add_common_flags(p)
    _add_eval_flags(p)
    p.add_argument("--estimator", default="ll", choices=("nw", "ll"))
    p.add_argument("--h", default="auto", help="bandwidth, or 'auto' for cross-validation")
    p.add_argument("--cv-mode", default="cluster", choices=("cluster", "loo"))
    p.add_argument("--weight-lo", type=float, default=None)
    p.add_argument("--weight-hi", type=float, default=None)
    subparsers["fit"] = p

    p = sub.add_parser("bandwidth", help="bandwidth selection")
    _add_data_flags(p)
    _add_common_flags(p)
    p.add_argument("--method", required=True, choices=("rot", "cr-rot", "cv", "cr-cv"))
    p.add_argument("--estimator", default="ll", choices=("nw", "ll"))
    p.add_argument("--weight-lo", type=float, required=True)
    p.add_argument("--weight-hi", type=float, required=True)
    p.add_argument("--grid-size", type=int, default=50)
    p.add_argument("--grid-span", type=float, default=3.0)
    subparsers["bandwidth"] = p

    p = sub.add_parser("infer", help="pointwise confidence intervals")
    _add_data_flags(p)
    _add_common_flags(p)
    p.add_argument("--x", required=True, help="evaluation points 'x1;x2' or 'a,b;c,d'")
    p.add_argument("--estimator", default="ll", choices=("nw", "ll"))
    p.add_argument("--h-m", default="auto", help="fit bandwidth, or 'auto'")
    p.add_argument(
        "--undersmooth",
        action="store_true",
        help="shrink the fit bandwidth by n^(1/5) n^(-2/7)",
    )
    p.add_argument("--h-f", type=float, default=None, help="density bandwidth")
    p.add_argument("--h-sigma2", type=float, default=None, help="variance bandwidth")
    p.add_argument("--b", type=float, default=None, help="pair-density bandwidth")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument(
        "--cov", default="parametric_compromise",
        choices=("parametric_compromise", "nonparametric"),
    )
    p.add_argument("--weight-lo", type=float, default=None)
    p.add_argument("--weight-hi", type=float, default=None)
    p.add_argument("--svg", default=None, help="also write a line chart to this path")
    subparsers["infer"] = p

    p = sub.add_parser("simulate", help="Monte Carlo experiments")
    _add_common_flags(p)
    p.add_argument(
        "--experiment", default="ase", choices=("ase", "coverage", "cv-decomposition")
    )
    p.add_argument("--setup", type=int, required=True, choices=(1, 2))
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--g-count", type=int, default=100)
    p.add_argument("--ng", type=int, default=20)
    p.add_argument("--ng-last", type=int, default=None, help="size of the last cluster")
    p.add_argument("--rho-x", type=float, default=0.2)
    p.add_argument("--rho-e", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--estimator", default="ll", choices=("nw", "ll"))
    p.add_argument("--methods", default="rot,cr-rot,cv,cr-cv")
    p.add_argument("--x-eval", type=float, default=None, help="coverage evaluation point")
    p.add_argument(
        "--bias-mode", default="undersmooth",
        choices=("undersmooth", "infeasible_correct", "ignore"),
    )
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument(
        "--cov", default="parametric_compromise",
        choices=("parametric_compromise", "nonparametric"),
    )
    p.add_argument("--h", type=float, default=None, help="fixed bandwidth (cv-decomposition)")
    p.add_argument("--window-lo", type=float, default=None)
    p.add_argument("--window-hi", type=float, default=None)
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    subparsers["simulate"] = p

    return parser, subparsers


def _read_config(path):
    pairs = []
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path} line {lineno}: expected key=value, got {raw!r}")
                key, _, value = line.partition("=")
                pairs.append((key.strip(), value.strip()))
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    return pairs


def _config_to_args(pairs, subparser):
    actions = {}
    for action in subparser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                actions[opt[2:]] = action
    out = []
    for key, value in pairs:
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                out.append(f"--{key}")
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
        else:
            out.extend([f"--{key}", value])
    return out


def _parse(argv):
    parser, subparsers = _build_parser()
    cmd_idx = next((i for i, a in enumerate(argv) if a in _COMMANDS), None)
    config_path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif a.startswith("--config="):
            config_path = a.split("=", 1)[1]
    if config_path is not None:
        if cmd_idx is None:
            raise UsageError("--config requires a subcommand")
        extra = _config_to_args(_read_config(config_path), subparsers[argv[cmd_idx]])
        argv = argv[: cmd_idx + 1] + extra + argv[cmd_idx + 1 :]
    return parser.parse_args(argv)


def _load(args):
    x_cols = tuple(c for c in args.x_cols.split(",") if c)
    cls_cols = tuple(c for c in args.cluster_level_cols.split(",") if c)
    if not x_cols:
        raise UsageError("--x-cols must name at least one column")
    schema = ColumnSchema(
        cluster_col=args.cluster_col, y_col=args.y_col, x_ind_cols=x_cols, x_cls_cols=cls_cols
    )
    return load_csv(args.input, schema)


def _eval_points(args, ds):
    chosen = sum(1 for v in (args.grid, args.points) if v) + (1 if args.at_data else 0)
    if chosen != 1:
        raise UsageError("choose exactly one of --grid, --points, --at-data")
    if args.at_data:
        return ds.x_pooled.copy()
    if args.grid is not None:
        if ds.d != 1:
            raise UsageError("--grid requires exactly one regressor; use --points")
        parts = args.grid.split(":")
        if len(parts) != 3:
            raise UsageError("--grid expects lo:hi:n")
        try:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise UsageError(f"cannot parse --grid {args.grid!r}") from None
        if n < 1 or not lo < hi:
            raise UsageError("--grid expects lo < hi and n >= 1")
        return np.linspace(lo, hi, n)[:, None]
    return _parse_points(args.points, ds.d)


def _parse_points(text, d):
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            coords = [float(c) for c in chunk.split(",")]
        except ValueError:
            raise UsageError(f"cannot parse point {chunk!r}") from None
        if len(coords) != d:
            raise UsageError(f"point {chunk!r} has {len(coords)} coords, data has {d}")
        pts.append(coords)
    if not pts:
        raise UsageError("no evaluation points given")
    return np.asarray(pts)


def _open_out(path):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _emit(header, rows, args):
    out, close = _open_out(args.out)
    try:
        if args.format == "csv":
            w = csv.writer(out, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(c) for c in row])
        else:
            payload = [dict(zip(header, row)) for row in rows]
            json.dump(payload, out, indent=2)
            out.write("\n")
    finally:
        if close:
            out.close()


def _window_from(args, what="--weight-lo/--weight-hi"):
    if args.weight_lo is None or args.weight_hi is None:
        raise UsageError(f"{what} are required here")
    return WeightWindow(lo=args.weight_lo, hi=args.weight_hi)


def _x_header(d):
    return ["x"] if d == 1 else [f"x{q + 1}" for q in range(d)]


def _cmd_density(args):
    ds = _load(args)
    kernel = get_kernel(args.kernel)
    pts = _eval_points(args, ds)
    if args.h == "reference":
        h = reference_h(ds)
        print(f"reference bandwidth h={_fmt(h)}", file=sys.stderr)
    else:
        h = _parse_bandwidth(args.h)
    rows = []
    for p in pts:
        est = density(ds, kernel, h, p)
        rows.append(list(p) + [est.value])
    _emit(_x_header(ds.d) + ["fhat"], rows, args)
    return 0


def _parse_bandwidth(text):
    try:
        h = float(text)
    except ValueError:
        raise UsageError(f"cannot parse bandwidth {text!r}") from None
    if not np.isfinite(h) or h <= 0.0:
        raise UsageError(f"bandwidth must be positive, got {text!r}")
    return h


def _auto_h(ds, kernel, estimator, window, mode):
    pilot = rot(ds, kernel, window, cluster_robust=True)
    report = cv_select(ds, kernel, estimator, window, mode=mode, grid=default_grid(pilot.h))
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"selected {report.method} bandwidth h={_fmt(report.h)}", file=sys.stderr)
    return report.h


def _cmd_fit(args):
    ds = _load(args)
    kernel = get_kernel(args.kernel)
    pts = _eval_points(args, ds)
    if args.h == "auto":
        window = _window_from(args, "--weight-lo/--weight-hi (needed for --h auto)")
        h = _auto_h(ds, kernel, args.estimator, window, args.cv_mode)
    else:
        h = _parse_bandwidth(args.h)
    fit = nw_fit if args.estimator == "nw" else ll_fit
    rows = []
    for p in pts:
        r = fit(ds, kernel, h, p)
        rows.append(list(p) + [r.estimate, r.n_effective])
    _emit(_x_header(ds.d) + ["mhat", "n_effective"], rows, args)
    return 0


def _cmd_bandwidth(args):
    ds = _load(args)
    kernel = get_kernel(args.kernel)
    window = WeightWindow(lo=args.weight_lo, hi=args.weight_hi)
    if args.method in ("rot", "cr-rot"):
        report = rot(ds, kernel, window, cluster_robust=args.method == "cr-rot")
    else:
        pilot = rot(ds, kernel, window, cluster_robust=True)
        grid = default_grid(pilot.h, size=args.grid_size, span=args.grid_span)
        mode = "cluster" if args.method == "cr-cv" else "loo"
        report = cv_select(ds, kernel, args.estimator, window, mode=mode, grid=grid)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.format == "json":
        payload = {
            "method": report.method,
            "h": report.h,
            "components": list(report.components),
            "trace": [list(t) for t in report.trace],
            "warnings": list(report.warnings),
        }
        out, close = _open_out(args.out)
        try:
            json.dump(payload, out, indent=2)
            out.write("\n")
        finally:
            if close:
                out.close()
        return 0
    rows = [["trace", h, c, "", ""] for h, c in report.trace]
    comps = report.components if report.components else ("", "")
    rows.append(["selected", report.h, "", comps[0], comps[1]])
    _emit(["record", "h", "criterion", "b_component", "sigma2_component"], rows, args)
    return 0


def _cmd_infer(args):
    ds = _load(args)
    kernel = get_kernel(args.kernel)
    pts = _parse_points(args.x, ds.d)
    if args.h_m == "auto":
        window = _window_from(args, "--weight-lo/--weight-hi (needed for --h-m auto)")
        h_m = _auto_h(ds, kernel, args.estimator, window, "cluster")
    else:
        h_m = _parse_bandwidth(args.h_m)
    if args.undersmooth:
        h_m = undersmooth(h_m, ds.n)
        print(f"undersmoothed fit bandwidth h_m={_fmt(h_m)}", file=sys.stderr)
    h_f = args.h_f if args.h_f is not None else reference_h(ds)
    h_s = args.h_sigma2 if args.h_sigma2 is not None else h_f
    b = args.b if args.b is not None else h_f
    header = _x_header(ds.d) + [
        "mhat",
        "se_iid",
        "se_cr",
        "se_lambda",
        "ci_lo",
        "ci_hi",
        "ci_cr_lo",
        "ci_cr_hi",
        "ci_lambda_lo",
        "ci_lambda_hi",
        "warnings",
    ]
    rows = []
    bands = []
    for p in pts:
        band = make_band(
            ds,
            kernel,
            args.estimator,
            p,
            h_m=h_m,
            h_f=h_f,
            h_sigma2=h_s,
            alpha=args.alpha,
            cov_method=args.cov,
            b=b,
        )
        bands.append(band)
        rows.append(
            list(p)
            + [
                band.estimate,
                band.se_iid,
                band.se_cr,
                band.se_lambda,
                band.ci[0],
                band.ci[1],
                band.ci_cr[0],
                band.ci_cr[1],
                band.ci_lambda[0],
                band.ci_lambda[1],
                "; ".join(band.warnings),
            ]
        )
    _emit(header, rows, args)
    if args.svg is not None:
        if ds.d != 1 or len(bands) < 2:
            raise UsageError("--svg needs one regressor and at least two points")
        with open(args.svg, "w") as fh:
            fh.write(_svg_chart(bands))
    return 0


def _svg_chart(bands, width=720, height=420, pad=45):
    """A self-contained SVG line chart: fit plus the lambda interval."""
    xs = np.array([float(b.x[0]) for b in bands])
    mid = np.array([b.estimate for b in bands])
    lo = np.array([b.ci_lambda[0] for b in bands])
    hi = np.array([b.ci_lambda[1] for b in bands])
    y_min, y_max = float(lo.min()), float(hi.max())
    if y_max <= y_min:
        y_max = y_min + 1.0
    x_min, x_max = float(xs.min()), float(xs.max())

    def sx(v):
        return pad + (v - x_min) / (x_max - x_min) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y_min) / (y_max - y_min) * (height - 2 * pad)

    def path(ys):
        return " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))

    band_pts = " ".join(
        [f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, hi)]
        + [f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs[::-1], lo[::-1])]
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<polygon points="{band_pts}" fill="#c6dbef" stroke="none"/>\n'
        f'<polyline points="{path(mid)}" fill="none" stroke="#08519c" stroke-width="1.5"/>\n'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        f'stroke="black"/>\n'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
        f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">x</text>\n'
        f'<text x="12" y="{height / 2:.0f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 12 {height / 2:.0f})">estimate</text>\n'
        "</svg>\n"
    )


def _cmd_simulate(args):
    config = DgpConfig(
        setup=args.setup,
        g_count=args.g_count,
        n_g_base=args.ng,
        n_g_last=args.ng_last if args.ng_last is not None else args.ng,
        rho_x=args.rho_x,
        rho_e=args.rho_e,
        seed=args.seed,
    )
    kernel = get_kernel(args.kernel)
    if args.window_lo is not None or args.window_hi is not None:
        if args.window_lo is None or args.window_hi is None:
            raise UsageError("--window-lo and --window-hi go together")
        window = WeightWindow(lo=args.window_lo, hi=args.window_hi)
    else:
        window = default_window(args.setup)
    workers = max(1, args.threads)
    failed = 0
    if args.experiment == "ase":
        methods = tuple(m for m in args.methods.split(",") if m)
        table = run_ase_table(
            config,
            reps=args.reps,
            methods=methods,
            estimator=args.estimator,
            kernel=kernel,
            window=window,
            workers=workers,
        )
        rows = [
            [r.method, r.mean_ase, r.se_ase, r.mean_h, r.se_h, r.reps_used, r.n_failed]
            for r in table.records
        ]
        _emit(
            ["method", "mean_ase", "se_ase", "mean_h", "se_h", "reps_used", "n_failed"],
            rows,
            args,
        )
        failed = table.n_failed
    elif args.experiment == "coverage":
        if args.x_eval is None:
            raise UsageError("--x-eval is required for the coverage experiment")
        table = run_coverage_table(
            config,
            x_eval=args.x_eval,
            reps=args.reps,
            estimator=args.estimator,
            kernel=kernel,
            bias_mode=args.bias_mode,
            alpha=args.alpha,
            cov_method=args.cov,
            window=window,
            workers=workers,
        )
        rows = [
            [
                r.variant,
                r.coverage,
                r.se_coverage,
                r.mean_length,
                r.se_length,
                table.mean_h_cv,
                table.mean_h_m,
                table.mean_lambda,
                table.n_clamped,
                r.reps_used,
                r.n_failed,
            ]
            for r in table.records
        ]
        _emit(
            [
                "variant",
                "coverage",
                "se_coverage",
                "mean_length",
                "se_length",
                "mean_h_cv",
                "mean_h_m",
                "mean_lambda",
                "n_clamped",
                "reps_used",
                "n_failed",
            ],
            rows,
            args,
        )
        failed = table.n_failed
    else:
        if args.h is None:
            raise UsageError("--h is required for the cv-decomposition experiment")
        res = cv_decomposition(
            config,
            h=args.h,
            reps=args.reps,
            estimator=args.estimator,
            kernel=kernel,
            window=window,
            workers=workers,
        )
        rows = [
            [
                res.h,
                res.mean_cv,
                res.se_cv,
                res.sigma2_bar_w,
                res.mean_imse,
                res.mean_diff,
                res.se_diff,
                res.reps_used,
                res.n_failed,
            ]
        ]
        _emit(
            [
                "h",
                "mean_cv",
                "se_cv",
                "sigma2_bar_w",
                "mean_imse",
                "mean_diff",
                "se_diff",
                "reps_used",
                "n_failed",
            ],
            rows,
            args,
        )
        failed = res.n_failed
    if failed:
        print(f"warning: {failed} replication(s) failed and were excluded", file=sys.stderr)
    return 0


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        args = _parse(argv)
        handler = {
            "density": _cmd_density,
            "fit": _cmd_fit,
            "bandwidth": _cmd_bandwidth,
            "infer": _cmd_infer,
            "simulate": _cmd_simulate,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
