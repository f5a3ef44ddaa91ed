"""Command-line entry point.

Subcommands::

    dbellquant quantize --synthetic 128x8 --out layer.dbqa
    dbellquant quantize --weights W.dbqt --calib X.dbqt --out layer.dbqa
    dbellquant verify --suite all --trials 200
    dbellquant analyze --weights W.dbqt --transform layer.dbqa --report hist.json
    dbellquant sweep --synthetic 128x8 --block-sizes 64,128,256 --epsilons 0.75,0.8,0.85,0.9 --out sweep.json

Every option can also come from a TOML file given with ``--config``; keys
use the long option name with underscores (``block_size = 64``). Options
given on the command line win over the file.

Exit codes: 0 success, 1 I/O or format error, 2 numerical divergence or a
failed verification, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from . import io as dio
from .actquant import ActQuantConfig, smoothing_report
from .binarizer import QuantLayout
from .ltdb import DivergenceError, LTDBConfig, apply_transform
from .pipeline import LayerSpec, evaluate_layer, histogram_export, histogram_modes, quantize_layer

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("dbellquant")

EXIT_OK = 0
EXIT_IO = 1
EXIT_DIVERGED = 2
EXIT_USAGE = 64

SUITES = ("equivalence", "scale-up", "scale-down", "dual-bell", "gradient")

DEFAULTS = {
    "block_size": 128,
    "epsilon": 0.85,
    "act_bits": 6,
    "seed": 0,
    "learning_rate": LTDBConfig.learning_rate,
    "max_epochs": LTDBConfig.max_epochs,
    "lambda_dtmd": 1.0,
    "lambda_dtnp": 1.0,
    "dtnp_norm": "l1",
    "calib_rows": 128,
    "outlier_frac": 0.01,
    "outlier_mag": 20.0,
    "trials": 200,
    "bins": 100,
    "suite": "all",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bits(text):
    v = int(text)
    if not 2 <= v <= 16:
        raise argparse.ArgumentTypeError("act bits must lie in [2, 16]")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _float_list(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text):
    return [_positive_int(t) for t in text.split(",") if t.strip()]


def _add_common(p):
    p.add_argument("--config", help="TOML file with option defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_quant_options(p):
    p.add_argument("--block-size", type=_positive_int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--act-bits", type=_bits)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--max-epochs", type=_positive_int)
    p.add_argument("--lambda-dtmd", type=float)
    p.add_argument("--lambda-dtnp", type=float)
    p.add_argument("--dtnp-norm", choices=["l1", "l2"])
    p.add_argument("--synthetic", metavar="CINxCOUT",
                   help="generate a Gaussian weight matrix and outlier-bearing calibration set")
    p.add_argument("--calib-rows", type=_positive_int)
    p.add_argument("--outlier-frac", type=float)
    p.add_argument("--outlier-mag", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dbellquant", description="Dual-bell weight binarization toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quantize", help="quantize one layer and write an artifact plus error report")
    _add_common(q)
    _add_quant_options(q)
    q.add_argument("--weights", help="tensor file with a (C_in, C_out) weight matrix")
    q.add_argument("--calib", help="tensor file with (N, C_in) calibration activations")
    q.add_argument("--out", help="artifact output path")
    q.add_argument("--report", help="error report JSON path (default: OUT.report.json)")
    q.add_argument("--transform-out", help="also write T as a tensor file")

    v = sub.add_parser("verify", help="run the oracle checks")
    _add_common(v)
    v.add_argument("--suite", choices=SUITES + ("all",))
    v.add_argument("--trials", type=_positive_int)
    v.add_argument("--eta", type=float, help="fixed scale-up factor (default: random in (1, 2))")
    v.add_argument("--gamma", type=float, help="fixed scale-down factor (default: random in (1/2, 1))")

    a = sub.add_parser("analyze", help="export weight histograms and smoothing statistics")
    _add_common(a)
    a.add_argument("--weights", help="weight tensor file")
    a.add_argument("--transform", help="tensor or artifact file holding T")
    a.add_argument("--calib", help="calibration tensor for the smoothing report")
    a.add_argument("--report", help="output JSON path")
    a.add_argument("--bins", type=_positive_int)

    s = sub.add_parser("sweep", help="grid over block size and epsilon, one error report per cell")
    _add_common(s)
    _add_quant_options(s)
    s.add_argument("--weights")
    s.add_argument("--calib")
    s.add_argument("--block-sizes", type=_int_list, default=None)
    s.add_argument("--epsilons", type=_float_list, default=None)
    s.add_argument("--out", help="output JSON path")
    return parser


def load_config(path) -> dict:
    with open(path, "rb") as f:
        data = tomllib.load(f)
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(args) -> dict:
    """Merge built-in defaults, the config file and explicit flags (flags win)."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        merged.update(load_config(args.config))
    for k, v in vars(args).items():
        if v is not None and k != "config":
            merged[k] = v
    return merged


def _ltdb_config(opts, block_size=None, epsilon=None) -> LTDBConfig:
    return LTDBConfig(
        epsilon=opts["epsilon"] if epsilon is None else epsilon,
        learning_rate=opts["learning_rate"],
        max_epochs=opts["max_epochs"],
        lambda_dtmd=opts["lambda_dtmd"],
        lambda_dtnp=opts["lambda_dtnp"],
        dtnp_norm=opts["dtnp_norm"],
        layout=QuantLayout(opts["block_size"] if block_size is None else block_size),
    )


def _parse_shape(text):
    try:
        rows, cols = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--synthetic expects CINxCOUT, got {text!r}") from None
    if rows < 1 or cols < 1:
        raise UsageError("--synthetic dimensions must be positive")
    return rows, cols


def _layer_data(opts):
    """Weights and calibration activations from files or the synthetic generator."""
    from .oracle import gen_calibration_with_outliers, gen_single_bell

    if opts.get("synthetic"):
        rows, cols = _parse_shape(opts["synthetic"])
        ss = np.random.SeedSequence(opts["seed"])
        w_seed, x_seed = ss.spawn(2)
        W = gen_single_bell(rows * cols, 0.0, 1.0, w_seed).reshape(rows, cols)
        X = gen_calibration_with_outliers(opts["calib_rows"], rows, opts["outlier_frac"],
                                          opts["outlier_mag"], x_seed)
        return W, X
    if not opts.get("weights") or not opts.get("calib"):
        raise UsageError("give --weights and --calib, or --synthetic")
    return dio.read_tensor(opts["weights"]), dio.read_tensor(opts["calib"])


def _run_layer(W, X, ltdb, act):
    spec = LayerSpec(W, X, ltdb, act)
    artifact = quantize_layer(spec)
    return artifact, evaluate_layer(spec, artifact)


def _layer_summary(artifact, report) -> dict:
    tr = artifact.trace
    return {
        "error": report.to_dict(),
        "trace": {"iterations": len(tr), "best_iter": tr.best_iter, "stop_reason": tr.stop_reason,
                  "dtmd_first": tr.dtmd[0], "dtmd_best": tr.dtmd[tr.best_iter]},
        "fraction_T_above_one": float(np.mean(artifact.transform > 1.0)),
    }


def cmd_quantize(opts) -> int:
    if not opts.get("out"):
        raise UsageError("--out is required")
    W, X = _layer_data(opts)
    ltdb = _ltdb_config(opts)
    act = ActQuantConfig(bits=opts["act_bits"])
    artifact, report = _run_layer(W, X, ltdb, act)
    dio.write_artifact(opts["out"], artifact)
    if opts.get("transform_out"):
        dio.write_tensor(opts["transform_out"], artifact.transform)
    summary = _layer_summary(artifact, report)
    summary["config"] = {"ltdb": ltdb.to_dict(), "act": act.to_dict(), "seed": opts["seed"]}
    dio.write_json(opts.get("report") or f"{opts['out']}.report.json", summary)
    log.info("mse %.6g (baseline %.6g)", report.mse, report.baseline_mse)
    return EXIT_OK


def _workers() -> int:
    try:
        cap = int(os.environ.get("DBQ_THREADS", "0"))
    except ValueError:
        cap = 0
    n = os.cpu_count() or 1
    return max(1, min(n, cap) if cap > 0 else n)


def cmd_sweep(opts) -> int:
    if not opts.get("out"):
        raise UsageError("--out is required")
    W, X = _layer_data(opts)
    act = ActQuantConfig(bits=opts["act_bits"])
    blocks = opts.get("block_sizes") or [64, 128, 256]
    epsilons = opts.get("epsilons") or [0.75, 0.8, 0.85, 0.9]
    cells = [(b, e) for b in blocks for e in epsilons]

    def run(cell):
        b, e = cell
        artifact, report = _run_layer(W, X, _ltdb_config(opts, block_size=b, epsilon=e), act)
        return {"block_size": b, "epsilon": e, **_layer_summary(artifact, report)}

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        results = list(pool.map(run, cells))
    dio.write_json(opts["out"], {"seed": opts["seed"], "act_bits": act.bits, "cells": results})
    return EXIT_OK


def run_suite(name, trials, seed, eta=None, gamma=None) -> dict:
    from . import verify

    return verify.SUITES[name](trials=trials, seed=seed, eta=eta, gamma=gamma)


def cmd_verify(opts) -> int:
    names = SUITES if opts["suite"] == "all" else (opts["suite"],)
    results = {n: run_suite(n, opts["trials"], opts["seed"], opts.get("eta"), opts.get("gamma"))
               for n in names}
    ok = all(r["passed"] for r in results.values())
    json.dump({"passed": ok, "suites": results}, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK if ok else EXIT_DIVERGED


def _load_transform(path):
    kind = dio.sniff(path)
    if kind == "artifact":
        return dio.read_artifact(path).transform
    if kind == "tensor":
        return dio.read_tensor(path).astype(np.float64).reshape(-1)
    raise dio.BadMagicError(f"{path}: not a tensor or artifact file")


def cmd_analyze(opts) -> int:
    if not opts.get("weights") or not opts.get("report"):
        raise UsageError("--weights and --report are required")
    W = np.asarray(dio.read_tensor(opts["weights"]), dtype=np.float64)
    if W.ndim != 2:
        raise UsageError("weights must be a 2-D tensor")
    out = {"weights": _hist_entry(W, opts["bins"])}
    if opts.get("transform"):
        T = _load_transform(opts["transform"])
        out["transformed"] = _hist_entry(apply_transform(W, T), opts["bins"])
        out["fraction_T_above_one"] = float(np.mean(T > 1.0))
        if opts.get("calib"):
            X = dio.read_tensor(opts["calib"]).astype(np.float64)
            out["smoothing"] = smoothing_report(X, T).to_dict()
    dio.write_json(opts["report"], out)
    return EXIT_OK


def _hist_entry(values, bins):
    h = histogram_export(values, bins)
    h["modes"] = histogram_modes(h["counts"])
    return h


COMMANDS = {"quantize": cmd_quantize, "verify": cmd_verify, "analyze": cmd_analyze, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve(args)
        if opts.get("trials") is not None and int(opts["trials"]) < 1:
            raise UsageError("--trials must be positive")
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dbellquant: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"dbellquant: {exc}; try a smaller --learning-rate", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, dio.FormatError, tomllib.TOMLDecodeError) as exc:
        print(f"dbellquant: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"dbellquant: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
