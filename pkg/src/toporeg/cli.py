"""Command line entry point: ``toporeg {gen,persist,fit,bench,cv}``.

Exit status 0 on success, 1 for configuration errors, 2 for runtime errors.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import harness as hz
from .complex import lower_star, write_filtration
from .persistence import reduce, write_diagram_csv
from .regress import FitResult, write_fit_csv
from .synth import write_csv


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise hz.ConfigError(message)


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--method", help="method name, or comma-separated names for bench")
    common.add_argument("--repeats", type=int)

    p = _Parser(prog="toporeg", description="Topological penalties for regression on Laplacian eigenbases.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common], help="synthesise a dataset to CSV")
    pp = sub.add_parser("persist", parents=[common], help="persistence diagram of a vertex function")
    pp.add_argument("--field", choices=("clean", "noisy"), default="noisy")
    pp.add_argument("--filtration", help="also dump the filtration here")
    sub.add_parser("fit", parents=[common], help="one fit, coefficients to CSV")
    sub.add_parser("bench", parents=[common], help="repeated benchmark, report to CSV")
    sub.add_parser("cv", parents=[common], help="cross-validation curve to CSV")
    return p


def _config(args) -> hz.ExperimentConfig:
    cfg = hz.ExperimentConfig.load(args.config) if args.config else hz.ExperimentConfig()
    method = None
    if args.method:
        names = [m.strip() for m in args.method.split(",") if m.strip()]
        method = names[0] if len(names) == 1 else names
    return cfg.with_overrides(seed=args.seed, out=args.out, method=method, repeats=args.repeats)


def _out(cfg, default: str) -> Path:
    return Path(cfg.out or default)


def cmd_gen(cfg) -> Path:
    return write_csv(hz.load_dataset(cfg, cfg.seed), _out(cfg, "data.csv"))


def cmd_persist(cfg, field: str, filtration) -> Path:
    cloud = hz.load_dataset(cfg, cfg.seed)
    values = cloud.response if field == "noisy" else cloud.clean_response
    if values is None:
        values = cloud.clean_response if cloud.response is None else cloud.response
    if values is None:
        raise hz.MissingResponseError("dataset carries no vertex values")
    _, cx = hz.build_graph_and_complex(cfg, cloud)
    filt = lower_star(cx, values)
    if filtration:
        write_filtration(filt, filtration)
    return write_diagram_csv(reduce(filt, cfg.max_dim - 1), _out(cfg, "diagram.csv"))


def cmd_fit(cfg) -> Path:
    ws = hz.Workspace(cfg, 0)
    method = cfg.methods[0]
    res = hz.fit_method(ws, method)
    idx, ref = ws.target()
    extra = {"method": method, "rmse": hz.rmse(res.prediction[idx], ref), "seed": ws.seed}
    out = _out(cfg, "fit.csv")
    if res.fit is not None:
        return write_fit_csv(res.fit, out, res.weights, extra)
    # baselines without coefficients: one row per vertex
    fit = FitResult(np.asarray(res.prediction), np.asarray(res.prediction), res.mu, {})
    extra["columns"] = "vertex values (no basis coefficients)"
    return write_fit_csv(fit, out, None, extra)


def cmd_bench(cfg) -> Path:
    out = _out(cfg, "bench.csv")
    report = hz.run_benchmark(cfg, out)
    for m in cfg.methods:
        print(f"{m}: mean RMSE {report.mean(m):.4f} +/- {report.std(m):.4f} over {report.values(m).size} repeats")
    failed = [r for r in report.records if r.status.startswith("error")]
    if failed:
        print(f"{len(failed)} failed runs, see {out}", file=sys.stderr)
    return out


def cmd_cv(cfg) -> Path:
    res = hz.cross_validate(cfg)
    out = _out(cfg, "cv.csv")
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu", "cv_mse", "selected"])
        for mu, err in zip(res.grid, res.curve):
            w.writerow([f"{mu:.17g}", f"{err:.17g}", int(mu == res.best)])
    return out


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        cfg = _config(args)
    except hz.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "gen":
            path = cmd_gen(cfg)
        elif args.command == "persist":
            path = cmd_persist(cfg, args.field, args.filtration)
        elif args.command == "fit":
            path = cmd_fit(cfg)
        elif args.command == "bench":
            path = cmd_bench(cfg)
        else:
            path = cmd_cv(cfg)
    except hz.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
