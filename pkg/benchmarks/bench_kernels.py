"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Times one loss+gradient evaluation (the body of a training iteration) and a
full training run for a few layer shapes, and checks that both backends
return the same numbers.
"""
import argparse
import json
import timeit

import numpy as np

from dbellquant import kernels
from dbellquant.ltdb import LTDBConfig, train_transform
from dbellquant.oracle import gen_calibration_with_outliers

SHAPES = [(128, 8), (512, 64), (2048, 256), (4096, 512)]


def bench_dual_target(rows, cols, repeat):
    rng = np.random.default_rng(0)
    W = rng.standard_normal((rows, cols))
    T = np.exp(rng.uniform(-0.5, 0.5, rows))
    out = {}
    ref = None
    for name in kernels.available_backends():
        fn = lambda: kernels.dual_target(W, T, 128, 1e-8, False, kernels.GRAD_TRACKED, backend=name)
        res = fn()
        if ref is None:
            ref = res
        else:
            assert abs(res[0] - ref[0]) <= 1e-12 * abs(ref[0])
            assert np.allclose(res[2], ref[2], rtol=1e-9, atol=1e-15)
        number = max(1, int(2e6 // (rows * cols)))
        out[name] = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
    return out


def bench_training(rows, cols, epochs):
    rng = np.random.default_rng(1)
    W = rng.standard_normal((rows, cols))
    X = gen_calibration_with_outliers(128, rows, seed=2)
    cfg = LTDBConfig(max_epochs=epochs)
    out = {}
    for name in kernels.available_backends():
        t = timeit.default_timer()
        train_transform(W, X, cfg, backend=name)
        out[name] = timeit.default_timer() - t
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--json")
    args = p.parse_args(argv)

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    rows = []
    print(f"\n{'shape':>12}  {'step numpy':>12}  {'step cython':>12}  {'speedup':>8}  "
          f"{'train numpy':>12}  {'train cython':>12}")
    for r, c in SHAPES:
        step = bench_dual_target(r, c, args.repeat)
        train = bench_training(r, c, args.epochs) if r * c <= 512 * 64 else {}
        cy = step.get("cython")
        speed = step["numpy"] / cy if cy else float("nan")
        print(f"{f'{r}x{c}':>12}  {step['numpy'] * 1e3:>10.3f}ms  "
              f"{(cy or float('nan')) * 1e3:>10.3f}ms  {speed:>7.1f}x  "
              f"{train.get('numpy', float('nan')):>11.3f}s  {train.get('cython', float('nan')):>11.3f}s")
        rows.append({"rows": r, "cols": c, "step_seconds": step, "train_seconds": train,
                     "train_epochs": args.epochs if train else None})
    if args.json:
        with open(args.json, "w") as f:
            json.dump({"backends": backends, "results": rows}, f, indent=2)


if __name__ == "__main__":
    main()
