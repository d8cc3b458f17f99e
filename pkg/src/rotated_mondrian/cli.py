"""Command-line entry point: ``rotated-mondrian <subcommand> --seed N [options]``.

Every output file gets a ``<name>.meta.json`` sidecar with the full
configuration, the seed and the package version.  Defaults are scaled down
for a laptop; larger runs are a matter of flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .core import SeededRng, load_csv
from .features import METHODS, PARTITION_METHODS
from .regression import RidgeConfig
from .stochgeom import typical_cell_stats, write_report, write_samples_csv
from .svg import line_chart


def version_string() -> str:
    """Package version, suffixed with ``git describe`` output when available."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


class Outputs:
    """Writes result files plus their metadata sidecars into one directory."""

    def __init__(self, args):
        self.dir = Path(args.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.svg = args.svg
        skip = {"func", "out", "jobs", "svg"}
        self.config = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
        self.version = version_string()
        self.written: list[Path] = []

    def _sidecar(self, path: Path) -> None:
        meta = {"file": path.name, "seed": self.config["seed"], "config": self.config,
                "version": self.version}
        with open(path.with_name(path.name + ".meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def csv(self, name: str, rows: list[dict], columns: list[str]) -> Path:
        path = self.dir / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for row in rows:
                w.writerow([_cell(row[c]) for c in columns])
        self._sidecar(path)
        self.written.append(path)
        return path

    def json(self, name: str, obj) -> Path:
        path = self.dir / name
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self._sidecar(path)
        self.written.append(path)
        return path

    def chart(self, name: str, series, **kw) -> None:
        if not self.svg:
            return
        path = self.dir / name
        line_chart(series, path, **kw)
        self._sidecar(path)
        self.written.append(path)


def _group_median(rows, key, x, y):
    out = {}
    for row in rows:
        out.setdefault(row[key], {}).setdefault(row[x], []).append(row[y])
    series, bands = {}, {}
    for k, d in out.items():
        xs = sorted(d)
        series[k] = (xs, [float(np.median(d[v])) for v in xs])
        bands[k] = ([float(np.min(d[v])) for v in xs], [float(np.max(d[v])) for v in xs])
    return series, bands


# ----------------------------------------------------------------- subcommands

def cmd_converge(args) -> int:
    out = Outputs(args)
    rows = ex.run_converge(args.methods, n_points=args.points, lifetime=args.lifetime,
                           M_max=args.features, repeats=args.repeats, rng=SeededRng(args.seed),
                           dim=args.dim, n_jobs=args.jobs)
    out.csv("converge.csv", rows, ["method", "M", "repeat", "max_error"])
    series, bands = _group_median(rows, "method", "M", "max_error")
    out.chart("converge.svg", series, bands=bands, logy=True, title="Kernel approximation error",
              xlabel="number of components M", ylabel="max |k_M - k|")
    return 0


def cmd_recover(args) -> int:
    out = Outputs(args)
    res, summary = ex.run_recover(n_per_split=args.points, true_lifetime=args.lifetime,
                                  M=args.features, lambda_max=args.lifetime_max,
                                  noise=args.noise, rng=SeededRng(args.seed), dim=args.dim,
                                  config=_ridge(args), n_jobs=args.jobs)
    rows = [{"lambda": float(a), "train": float(b), "validation": float(c), "test": float(d)}
            for a, b, c, d in zip(res.lifetimes, res.train, res.validation, res.test)]
    out.csv("recover.csv", rows, ["lambda", "train", "validation", "test"])
    out.json("recover.json", summary)
    out.chart("recover.svg", {"train": (res.lifetimes, res.train),
                              "validation": (res.lifetimes, res.validation),
                              "test": (res.lifetimes, res.test)},
              title="Errors along the lifetime sweep", xlabel="lifetime", ylabel="RMSE")
    print(f"lambda_hat = {summary['lambda_hat']:.6g}")
    return 0


def cmd_regress(args) -> int:
    out = Outputs(args)
    rng = SeededRng(args.seed)
    if args.input:
        if not args.target:
            raise ValueError("--input needs --target")
        data = load_csv(args.input, args.target)
    else:
        data = ex.cpu_like_dataset(args.points, rng.derive(100))
    splits, mean = ex.prepare_regression_splits(data, rng.derive(0))
    config = _ridge(args)
    methods = ex.parse_methods(args.methods)
    lifetimes = {m: (args.rotated_lifetime if m == "rotated-mondrian" else args.lifetime)
                 for m in methods}
    grid = None
    if args.grid == "log":
        grid = np.unique(np.round(np.geomspace(1, args.features, 12)).astype(int))
    rows = ex.run_regress_features(splits, methods, args.features, lifetimes, config,
                                   args.repeats, rng.derive(1), grid=grid, n_jobs=args.jobs)
    out.csv("regress_features.csv", rows,
            ["method", "repeat", "M", "n_features", "validation_error"])
    summary = {"target_mean": mean, "n_train": splits[0].n, "n_validation": splits[1].n,
               "n_test": splits[2].n, "lifetimes": lifetimes}
    if args.time_mode:
        trail, cpu = ex.run_regress_time(splits, methods, args.time_features, args.lifetime_max,
                                         (args.search_lo, args.search_hi), args.budget, config,
                                         rng.derive(2), n_jobs=args.jobs)
        out.csv("regress_time.csv", trail,
                ["method", "step", "lifetime", "validation_error", "best_validation_error"])
        out.csv("regress_time_cpu.csv", cpu, ["method", "step", "cpu_seconds"])
        best = {}
        for row in trail:
            cur = best.get(row["method"])
            if cur is None or row["validation_error"] < cur["validation_error"]:
                best[row["method"]] = {"lifetime": row["lifetime"],
                                       "validation_error": row["validation_error"]}
        summary["selected"] = best
    out.json("regress.json", summary)
    if args.svg:
        series, bands = _group_median(rows, "method", "M", "validation_error")
        nfeat, _ = _group_median(rows, "method", "M", "n_features")
        xy = {m: (nfeat[m][1], series[m][1]) for m in series}
        out.chart("regress_features.svg", xy, logx=True, title="Validation error vs features",
                  xlabel="nonzero random features", ylabel="validation RMSE")
        if args.time_mode:
            stamps = {}
            for row, c in zip(trail, cpu):
                xs, ys = stamps.setdefault(row["method"], ([], []))
                xs.append(c["cpu_seconds"])
                ys.append(row["best_validation_error"])
            out.chart("regress_time.svg", stamps, title="Validation error vs CPU time",
                      xlabel="CPU seconds", ylabel="best validation RMSE")
    return 0


def cmd_mondrian_line(args) -> int:
    out = Outputs(args)
    spec = ex.MondrianLineSpec(n_per_split=args.points, eps=args.eps)
    rows, summary = ex.run_mondrian_line(spec, args.methods, M=args.features,
                                         lambda_max=args.lifetime_max, config=_ridge(args),
                                         rng=SeededRng(args.seed), n_jobs=args.jobs)
    out.csv("mondrian_line.csv", rows, ["method", "lambda", "split", "relative_error"])
    out.json("mondrian_line.json", summary)
    series = {}
    for row in rows:
        if row["split"] == "validation":
            continue
        xs, ys = series.setdefault(f"{row['method']} ({row['split']})", ([], []))
        xs.append(row["lambda"])
        ys.append(row["relative_error"])
    out.chart("mondrian_line.svg", series, logx=True, title="Relative error vs lifetime",
              xlabel="lifetime", ylabel="relative error")
    return 0


def cmd_typical_cell(args) -> int:
    out = Outputs(args)
    if args.dim not in (2, 3):
        raise ValueError("typical-cell supports --dim 2 or 3")
    report = typical_cell_stats(args.components, args.lifetime, args.dim, args.samples,
                                SeededRng(args.seed), keep_samples=args.samples_csv,
                                n_jobs=args.jobs)
    path = out.dir / "typical_cell.json"
    write_report(report, path)
    out._sidecar(path)
    if args.samples_csv:
        spath = out.dir / "typical_cell_samples.csv"
        write_samples_csv(report, spath)
        out._sidecar(spath)
    status = "pass" if report["pass"] else "FAIL"
    print(f"typical cell (M={args.components}, lambda={args.lifetime}, d={args.dim}): {status}")
    return 0 if report["pass"] else 1


def cmd_kernel_table(args) -> int:
    out = Outputs(args)
    rows = ex.kernel_table(args.lifetime, args.dim, args.r_max, args.points)
    out.csv("kernel_table.csv", rows, ["r", "value"])
    r = [row["r"] for row in rows]
    out.chart("kernel_table.svg", {"rotated limit": (r, [row["value"] for row in rows]),
                                   "exp(-lambda r)": (r, list(np.exp(-args.lifetime * np.array(r))))},
              title=f"Limiting kernel, d={args.dim}", xlabel="r", ylabel="k(r)")
    return 0


# ----------------------------------------------------------------- argparse

def _ridge(args) -> RidgeConfig:
    return RidgeConfig(ridge=args.ridge, solver=args.solver)


def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _methods(allowed):
    def conv(text):
        try:
            methods = ex.parse_methods(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
        bad = [m for m in methods if m not in allowed]
        if bad:
            raise argparse.ArgumentTypeError(f"not supported here: {', '.join(bad)}")
        return methods
    return conv


pos_int, pos_float = _positive(int), _positive(float)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, required=True, help="master random seed (required)")
    common.add_argument("--out", default="results", help="output directory (default: results)")
    common.add_argument("--jobs", type=pos_int, default=1,
                        help="worker threads; results do not depend on it (default: 1)")
    common.add_argument("--svg", action=argparse.BooleanOptionalAction, default=True,
                        help="also write SVG plots")

    ridge = argparse.ArgumentParser(add_help=False)
    ridge.add_argument("--ridge", type=pos_float, default=1e-4, help="ridge constant (default: 1e-4)")
    ridge.add_argument("--solver", choices=("exact", "sgd"), default="exact",
                       help="ridge solver (default: exact)")

    p = argparse.ArgumentParser(prog="rotated-mondrian",
                                description="Rotated Mondrian kernel experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("converge", parents=[common],
                       help="kernel approximation error against M")
    s.add_argument("--methods", type=_methods(METHODS), default=METHODS,
                   help="comma-separated subset of " + ",".join(METHODS))
    s.add_argument("--points", type=pos_int, default=100, help="number of points (default: 100)")
    s.add_argument("--lifetime", type=pos_float, default=10.0, help="lifetime (default: 10)")
    s.add_argument("--features", type=pos_int, default=50, help="largest M (default: 50)")
    s.add_argument("--repeats", type=pos_int, default=5, help="repeats (default: 5)")
    s.add_argument("--dim", type=pos_int, default=2, help="input dimension (default: 2)")
    s.set_defaults(func=cmd_converge)

    s = sub.add_parser("recover", parents=[common, ridge],
                       help="lifetime recovery on Gaussian-process data",
                       description="Defaults (150 points per split) are a scaled-down protocol.")
    s.add_argument("--points", type=pos_int, default=150, help="points per split (default: 150)")
    s.add_argument("--lifetime", type=pos_float, default=10.0, help="true lifetime (default: 10)")
    s.add_argument("--lifetime-max", type=pos_float, default=30.0, help="sweep horizon (default: 30)")
    s.add_argument("--features", type=pos_int, default=50, help="M (default: 50)")
    s.add_argument("--noise", type=pos_float, default=0.1, help="noise sd (default: 0.1)")
    s.add_argument("--dim", type=pos_int, default=2, help="input dimension (default: 2)")
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("regress", parents=[common, ridge],
                       help="error against feature count (and CPU time) on a regression set",
                       description="Without --input, a synthetic 21-column stand-in is used. "
                                   "Targets are centered on the training mean.")
    s.add_argument("--input", help="CSV file with a header row")
    s.add_argument("--target", help="name of the target column in --input")
    s.add_argument("--points", type=pos_int, default=1000,
                   help="rows of the synthetic stand-in (default: 1000)")
    s.add_argument("--methods", type=_methods(METHODS), default=METHODS,
                   help="comma-separated subset of " + ",".join(METHODS))
    s.add_argument("--features", type=pos_int, default=50, help="largest M (default: 50)")
    s.add_argument("--grid", choices=("all", "log"), default="all",
                   help="evaluate every M or ~12 log-spaced values (default: all)")
    s.add_argument("--repeats", type=pos_int, default=5, help="repeats (default: 5)")
    s.add_argument("--lifetime", type=pos_float, default=1e-6,
                   help="lifetime of mondrian, binning and fourier (default: 1e-6)")
    s.add_argument("--rotated-lifetime", type=pos_float, default=2.5e-7,
                   help="lifetime of rotated-mondrian (default: 2.5e-7)")
    s.add_argument("--time", dest="time_mode", action="store_true",
                   help="also record the lifetime-selection trajectory with CPU time")
    s.add_argument("--time-features", type=pos_int, default=50,
                   help="M used in the timing run (default: 50)")
    s.add_argument("--lifetime-max", type=pos_float, default=1e-5,
                   help="sweep horizon of partition methods in the timing run (default: 1e-5)")
    s.add_argument("--search-lo", type=pos_float, default=1e-8,
                   help="lower end of the bandwidth search (default: 1e-8)")
    s.add_argument("--search-hi", type=pos_float, default=1e-4,
                   help="upper end of the bandwidth search (default: 1e-4)")
    s.add_argument("--budget", type=pos_int, default=12,
                   help="bandwidth search evaluations (default: 12)")
    s.set_defaults(func=cmd_regress)

    s = sub.add_parser("mondrian-line", parents=[common, ridge],
                       help="relative error against lifetime on the Mondrian line")
    s.add_argument("--methods", type=_methods(PARTITION_METHODS), default=PARTITION_METHODS,
                   help="comma-separated subset of " + ",".join(PARTITION_METHODS))
    s.add_argument("--points", type=pos_int, default=500, help="points per split (default: 500)")
    s.add_argument("--eps", type=pos_float, default=0.01, help="slab half-thickness (default: 0.01)")
    s.add_argument("--features", type=pos_int, default=500, help="M (default: 500)")
    s.add_argument("--lifetime-max", type=pos_float, default=1000.0,
                   help="sweep horizon (default: 1000)")
    s.set_defaults(func=cmd_mondrian_line)

    s = sub.add_parser("typical-cell", parents=[common],
                       help="Monte Carlo check of the typical-cell formulas; exit 1 on failure")
    s.add_argument("--components", "-M", type=pos_int, default=1,
                   help="number of superposed tessellations (default: 1)")
    s.add_argument("--lifetime", type=pos_float, default=1.0, help="lifetime (default: 1)")
    s.add_argument("--dim", type=pos_int, default=2, help="dimension, 2 or 3 (default: 2)")
    s.add_argument("--samples", type=pos_int, default=100_000, help="samples (default: 100000)")
    s.add_argument("--samples-csv", action="store_true", help="also dump per-sample values")
    s.set_defaults(func=cmd_typical_cell)

    s = sub.add_parser("kernel-table", parents=[common],
                       help="tabulate the rotated limiting kernel against distance")
    s.add_argument("--lifetime", type=pos_float, default=1.0, help="lifetime (default: 1)")
    s.add_argument("--dim", type=pos_int, default=2, help="dimension (default: 2)")
    s.add_argument("--r-max", type=pos_float, default=3.0, help="largest distance (default: 3)")
    s.add_argument("--points", type=pos_int, default=61, help="grid size (default: 61)")
    s.set_defaults(func=cmd_kernel_table)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if isinstance(args.methods if hasattr(args, "methods") else None, tuple):
        args.methods = list(args.methods)
    try:
        return args.func(args)
    except (KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
