"""Command line front end.

Exit codes: 0 success, 2 usage, 3 data, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .band import BandConfig, BandResult, CdfBandResult, assemble_band, cdf_band, multiplier_quantile, spec_test
from .bandwidth import BandwidthConfig, pilot_eiv_polyfit, select_bandwidth
from .charfn import KernelSpec, empirical_cf, trapezoid_grid
from .deconv import build_table
from .errors import DataError, DeconvBandError
from .estimate import estimate_on_grid
from .samples import RepeatedMeasurements, Sample, center_eta, from_repeated, from_validation
from .simulate import DgpSpec, coverage_experiment, reports_to_csv

log = logging.getLogger("deconvband")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def fmt(value: float) -> str:
    """Locale-independent float text that round-trips exactly."""
    return repr(float(value))


def level_tag(level: float) -> str:
    pct = level * 100
    return str(int(round(pct))) if math.isclose(pct, round(pct), abs_tol=1e-9) else fmt(pct)


# --- ingestion -------------------------------------------------------------

def read_columns(path, columns):
    """Read named numeric columns from a CSV with a header row.

    Rows where any requested field is missing or non-finite are dropped.
    Returns ``(dict of arrays, number of dropped rows)``.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in columns if c not in header]
            if missing:
                raise DataError(f"{path}: missing column(s) {missing}; found {header}")
            data = {c: [] for c in columns}
            dropped = 0
            for row in reader:
                try:
                    vals = [float(row[c]) for c in columns]
                except (TypeError, ValueError):
                    dropped += 1
                    continue
                if not all(math.isfinite(v) for v in vals):
                    dropped += 1
                    continue
                for c, v in zip(columns, vals):
                    data[c].append(v)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if dropped:
        log.warning("%s: dropped %d row(s) with missing or non-finite fields", path, dropped)
    return {c: np.array(v) for c, v in data.items()}, dropped


def header_of(path):
    try:
        with open(path, newline="") as fh:
            return next(csv.reader(fh), [])
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def load_sample(args) -> tuple[Sample, dict]:
    if not args.input:
        raise UsageError("--input is required")
    info = {}
    if args.w1 or args.w2:
        if not (args.w1 and args.w2):
            raise UsageError("--w1 and --w2 must be given together")
        cols, dropped = read_columns(args.input, [args.y_col, args.w1, args.w2])
        s = from_repeated(RepeatedMeasurements(cols[args.y_col], cols[args.w1], cols[args.w2]))
        info["dropped_rows"] = dropped
    elif args.eta:
        cols, dropped = read_columns(args.input, [args.y_col, args.w_col])
        header = header_of(args.eta)
        if args.eta_col in header:
            ecols, edropped = read_columns(args.eta, [args.eta_col])
            s = Sample(cols[args.y_col], cols[args.w_col], ecols[args.eta_col], {"source": "eta"})
        elif args.x_val_col in header and args.w_val_col in header:
            ecols, edropped = read_columns(args.eta, [args.x_val_col, args.w_val_col])
            s = from_validation(cols[args.y_col], cols[args.w_col], ecols[args.x_val_col],
                                ecols[args.w_val_col])
        else:
            raise DataError(
                f"{args.eta}: needs column {args.eta_col!r} or validation columns "
                f"{args.x_val_col!r}/{args.w_val_col!r}"
            )
        info["dropped_rows"] = dropped
        info["dropped_eta_rows"] = edropped
    else:
        raise UsageError("no measurement-error source: give --eta FILE or --w1/--w2 columns")
    if args.center_eta:
        s = center_eta(s)
    info.update(n=s.n, m=s.m)
    return s, info


# --- configuration helpers -------------------------------------------------

def x_grid_of(args):
    if args.interval is None:
        raise UsageError("--interval LO HI is required")
    lo, hi = args.interval
    if not lo < hi:
        raise UsageError(f"--interval needs LO < HI, got {lo} {hi}")
    if args.grid_points < 1:
        raise UsageError("--grid-points must be positive")
    return np.linspace(lo, hi, args.grid_points)


def levels_of(args):
    levels = tuple(args.levels)
    if not levels or any(not 0 < lv < 1 for lv in levels):
        raise UsageError("--levels must lie in (0, 1)")
    return tuple(sorted(levels))


def kernel_of(args):
    try:
        return KernelSpec(args.kernel_b, args.kernel_c)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def band_config_of(args, min_reps=100):
    if args.reps < min_reps:
        raise UsageError(f"--reps must be at least {min_reps}")
    if args.quad_nodes < 65 or args.quad_nodes % 2 == 0:
        raise UsageError("--quad-nodes must be an odd integer >= 65")
    return BandConfig(levels=levels_of(args), reps=args.reps, grid_points=args.grid_points,
                      kernel=kernel_of(args), n_nodes=args.quad_nodes,
                      exclude_clamped=args.exclude_clamped)


def bandwidth_config_of(args, x_grid):
    grid = None
    if getattr(args, "h_grid", None):
        grid = np.array(args.h_grid, dtype=float)
        if grid.size < 2 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise UsageError("--h-grid needs at least two positive, strictly increasing values")
    if args.cn_exponent <= 0:
        raise UsageError("--cn-exponent must be positive")
    return BandwidthConfig(x_grid=x_grid, grid=grid, cn_exponent=args.cn_exponent,
                           pilot_degree=args.pilot_degree, kernel=kernel_of(args),
                           n_nodes=args.quad_nodes)


def resolve_bandwidth(args, s, x_grid):
    if str(args.bandwidth).lower() == "auto":
        h, trace = select_bandwidth(s, bandwidth_config_of(args, x_grid), workers=args.threads)
        return h, trace
    try:
        h = float(args.bandwidth)
    except ValueError as exc:
        raise UsageError(f"--bandwidth must be 'auto' or a positive number, got {args.bandwidth!r}") from exc
    if not (math.isfinite(h) and h > 0):
        raise UsageError(f"--bandwidth must be positive, got {h}")
    return h, None


def write_text(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def sidecar_path(out):
    return str(Path(out).with_suffix(".json")) if Path(out).suffix != ".json" else str(out) + ".meta.json"


# --- band ------------------------------------------------------------------

def band_columns(band: BandResult):
    cols = {"x": band.x, "ghat": band.g, "fxhat": band.fx, "shat": band.s}
    for i, lv in enumerate(band.levels):
        tag = level_tag(lv)
        cols[f"lower{tag}"] = band.lower[i]
        cols[f"upper{tag}"] = band.upper[i]
    return cols


def columns_to_csv(cols) -> str:
    lines = [",".join(cols)]
    arrays = list(cols.values())
    for i in range(len(arrays[0])):
        lines.append(",".join(fmt(a[i]) for a in arrays))
    return "\n".join(lines) + "\n"


def read_band_csv(path):
    """Parse a band CSV written by ``band``; returns a dict of float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


def band_meta(band, h_trace, info, args):
    meta = {
        "h": band.h,
        "levels": list(band.levels),
        "taus": [1.0 - lv for lv in band.levels],
        "quantiles": band.quantiles.tolist(),
        "seed": band.seed,
        "reps": band.reps,
        "interval": list(args.interval),
        "kernel": {"b": args.kernel_b, "c": args.kernel_c},
        "quad_nodes": args.quad_nodes,
        "diagnostics": {**band.diagnostics, **info, "clamped_x": band.x[band.clamped].tolist()},
    }
    if h_trace is not None:
        meta["bandwidth_trace"] = h_trace.to_dict()
    return meta


def run_band(s, args, x_grid, config):
    h, trace = resolve_bandwidth(args, s, x_grid)
    tbl = build_table(empirical_cf(s.eta, trapezoid_grid(65)), config.kernel, h, config.n_nodes)
    grid = estimate_on_grid(s, tbl, x_grid)
    q = multiplier_quantile(s, grid, config.levels, config.reps, args.seed, config.exclude_clamped)
    return assemble_band(grid, q, config.levels, n=s.n, reps=config.reps, seed=args.seed), trace


def cmd_band(args):
    s, info = load_sample(args)
    x_grid = x_grid_of(args)
    config = band_config_of(args)
    band, trace = run_band(s, args, x_grid, config)
    meta = band_meta(band, trace, info, args)
    out = args.out or "band.csv"
    cols = band_columns(band)
    if args.format == "json":
        write_text(out, dump_json({**meta, "columns": {k: v.tolist() for k, v in cols.items()}}))
    else:
        write_text(out, columns_to_csv(cols))
        write_text(sidecar_path(out), dump_json(meta))
    print(f"h = {fmt(band.h)}; quantiles " + ", ".join(
        f"{level_tag(lv)}%: {q:.4f}" for lv, q in zip(band.levels, band.quantiles)))
    return EXIT_OK


# --- bandwidth -------------------------------------------------------------

def cmd_bandwidth(args):
    s, info = load_sample(args)
    x_grid = x_grid_of(args)
    h, trace = select_bandwidth(s, bandwidth_config_of(args, x_grid), workers=args.threads)
    out = args.out or "bandwidth_trace.json"
    write_text(out, dump_json({**trace.to_dict(), "data": info}))
    print(f"h = {fmt(h)}")
    if trace.no_crossing:
        print("warning: no candidate satisfied the selection rule; largest candidate returned",
              file=sys.stderr)
    return EXIT_OK


# --- simulate --------------------------------------------------------------

def cmd_simulate(args):
    cells = [
        (model, g, n, sx, cn)
        for model in args.models
        for g in args.g
        for n in args.n
        for sx in args.sigma_x
        for cn in args.cn_exponents
    ]
    if not cells:
        raise UsageError("empty simulation sweep")
    if args.mc_reps < 1:
        raise UsageError("--mc-reps must be positive")
    config = band_config_of(args)
    reports = []
    for model, g, n, sx, cn in cells:
        try:
            spec = DgpSpec(f"model{model}", g, sx, n, args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        bw = BandwidthConfig(x_grid=np.zeros(1), cn_exponent=cn, pilot_degree=args.pilot_degree,
                             kernel=config.kernel, n_nodes=config.n_nodes)
        rep = coverage_experiment(spec, config, bw, args.mc_reps, args.seed, workers=args.threads)
        print(f"model {model} g={g} n={n} sigma_x={sx} cn^{cn}: coverage "
              + ", ".join(f"{level_tag(lv)}%={c:.3f}" for lv, c in zip(rep.levels, rep.coverage))
              + f" (reps={rep.reps}, failures={rep.failures}, {rep.runtime:.1f}s)", file=sys.stderr)
        reports.append(rep)
    out = args.out or "coverage.csv"
    if args.format == "json":
        rows = [row for r in reports for row in r.rows()]
        write_text(out, dump_json({"seed": args.seed, "mc_reps": args.mc_reps, "rows": rows}))
    else:
        write_text(out, reports_to_csv(reports, fmt))
    return EXIT_OK


# --- spectest --------------------------------------------------------------

def cmd_spectest(args):
    s, info = load_sample(args)
    x_grid = x_grid_of(args)
    config = band_config_of(args)
    if not args.level in config.levels:
        config = replace(config, levels=tuple(sorted(set(config.levels) | {args.level})))
    band, trace = run_band(s, args, x_grid, config)
    fit = pilot_eiv_polyfit(s, args.degree)
    result = spec_test(band, fit(x_grid), band.level_index(args.level))
    report = {
        "reject": result.reject,
        "level": result.level,
        "tau": 1.0 - result.level,
        "degree": args.degree,
        "coefficients": fit.coef.tolist(),
        "violations": result.violations.tolist(),
        "h": band.h,
        "quantile": float(band.quantiles[band.level_index(args.level)]),
        "seed": args.seed,
        "reps": band.reps,
    }
    write_text(args.out or "spectest.json", dump_json(report))
    verdict = "reject" if result.reject else "accept"
    print(f"{verdict}: degree-{args.degree} EIV polynomial at level {args.level} "
          f"({len(result.violations)} grid point(s) outside the band)")
    return EXIT_OK


# --- cdfband ---------------------------------------------------------------

def y_grid_of(args, s):
    if args.y_grid_points < 1:
        raise UsageError("--y-grid-points must be positive")
    if args.y_range is not None:
        lo, hi = args.y_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise UsageError(f"--y-range needs finite LO < HI, got {lo} {hi}")
    else:
        lo, hi = np.quantile(s.y, [0.05, 0.95])
    return np.linspace(lo, hi, args.y_grid_points)


def cdf_rows(res: CdfBandResult):
    header = ["y", "x", "ghat", "shat"]
    for lv in res.levels:
        tag = level_tag(lv)
        header += [f"lower{tag}", f"upper{tag}"]
    lines = [",".join(header)]
    for i, y in enumerate(res.y):
        for k, x in enumerate(res.x):
            vals = [y, x, res.g[i, k], res.s[i, k]]
            for li in range(len(res.levels)):
                vals += [res.lower[li, i, k], res.upper[li, i, k]]
            lines.append(",".join(fmt(v) for v in vals))
    return "\n".join(lines) + "\n"


def cmd_cdfband(args):
    s, info = load_sample(args)
    x_grid = x_grid_of(args)
    config = band_config_of(args)
    y_grid = y_grid_of(args, s)
    h, trace = resolve_bandwidth(args, s, x_grid)
    tbl = build_table(empirical_cf(s.eta, trapezoid_grid(65)), config.kernel, h, config.n_nodes)
    res = cdf_band(s, tbl, x_grid, y_grid, config.levels, config.reps, args.seed)
    out = args.out or "cdfband.csv"
    meta = {
        "h": res.h, "levels": list(res.levels), "taus": [1 - lv for lv in res.levels],
        "quantiles": res.quantiles.tolist(), "seed": res.seed, "reps": res.reps,
        "y_grid": res.y.tolist(), "diagnostics": {**res.diagnostics, **info},
    }
    if trace is not None:
        meta["bandwidth_trace"] = trace.to_dict()
    if args.format == "json":
        meta.update(g=res.g.tolist(), lower=res.lower.tolist(), upper=res.upper.tolist(), x=res.x.tolist())
        write_text(out, dump_json(meta))
    else:
        write_text(out, cdf_rows(res))
        write_text(sidecar_path(out), dump_json(meta))
    print(f"h = {fmt(res.h)}; {res.y.size} x {res.x.size} grid; quantiles "
          + ", ".join(f"{level_tag(lv)}%: {q:.4f}" for lv, q in zip(res.levels, res.quantiles)))
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def _default_threads():
    env = os.environ.get("DECONVBAND_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults (flags override it)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker count (default: $DECONVBAND_THREADS or 1)")
    common.add_argument("--out")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--levels", type=float, nargs="+", default=[0.80, 0.90, 0.95])
    common.add_argument("--reps", type=int, default=1000, help="bootstrap replications")
    common.add_argument("--kernel-b", type=float, default=1.0)
    common.add_argument("--kernel-c", type=float, default=0.05)
    common.add_argument("--quad-nodes", type=int, default=2049)
    common.add_argument("--grid-points", type=int, default=101)
    common.add_argument("--cn-exponent", type=float, default=0.3)
    common.add_argument("--pilot-degree", type=int, default=3)
    common.add_argument("--exclude-clamped", action="store_true",
                        help="leave clamped-density grid points out of the bootstrap supremum")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", help="CSV with response and contaminated predictor columns")
    data.add_argument("--y-col", default="y")
    data.add_argument("--w-col", default="w")
    data.add_argument("--eta", help="CSV of error draws (column --eta-col) or validation pairs")
    data.add_argument("--eta-col", default="eta")
    data.add_argument("--x-val-col", default="x")
    data.add_argument("--w-val-col", default="w")
    data.add_argument("--w1", help="first repeated-measurement column of --input")
    data.add_argument("--w2", help="second repeated-measurement column of --input")
    data.add_argument("--center-eta", action="store_true")
    data.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"))
    data.add_argument("--bandwidth", default="auto", help="'auto' or a fixed bandwidth")
    data.add_argument("--h-grid", type=float, nargs="+", help="candidate bandwidths for 'auto'")

    parser = argparse.ArgumentParser(prog="deconvband", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("band", parents=[common, data], help="uniform confidence band for g")
    p.set_defaults(func=cmd_band)
    p = sub.add_parser("bandwidth", parents=[common, data], help="undersmoothing bandwidth selection")
    p.set_defaults(func=cmd_bandwidth)
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo coverage experiment")
    p.add_argument("--models", type=int, nargs="+", choices=(1, 2), default=[1])
    p.add_argument("--g", nargs="+", default=["linear"])
    p.add_argument("--n", type=int, nargs="+", default=[500])
    p.add_argument("--sigma-x", type=float, nargs="+", default=[2.0])
    p.add_argument("--cn-exponents", type=float, nargs="+", default=None,
                   help="c_n exponents to sweep (default: --cn-exponent)")
    p.add_argument("--mc-reps", type=int, default=500)
    p.set_defaults(func=cmd_simulate, reps=500)
    p = sub.add_parser("spectest", parents=[common, data], help="sup-norm specification test")
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_spectest)
    p = sub.add_parser("cdfband", parents=[common, data], help="band for the conditional CDF")
    p.add_argument("--y-grid-points", type=int, default=25)
    p.add_argument("--y-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(func=cmd_cdfband)
    return parser, sub


def parse_args(argv):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        sub.choices[args.command].set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
        args = parser.parse_args(argv)
    if getattr(args, "cn_exponents", "absent") is None:
        args.cn_exponents = [args.cn_exponent]
    return parser, args


def main(argv=None) -> int:
    parser, args = parse_args(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be positive")
    start = time.perf_counter()
    try:
        # Single-threaded BLAS keeps results bitwise identical for any --threads.
        with threadpool_limits(limits=1), warnings.catch_warnings():
            warnings.simplefilter("default")
            code = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"deconvband: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DeconvBandError as exc:
        print(f"deconvband: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (EXIT_DATA, EXIT_NUMERIC) else EXIT_NUMERIC
    log.info("finished in %.2fs", time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
