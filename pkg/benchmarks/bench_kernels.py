"""Numba kernels vs the pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Every case first checks that both backends return identical arrays, then
reports the best-of-N wall time for each.  The first numba call (JIT
compilation) is excluded.
"""
import argparse
import json
import time

import numpy as np

from tinyadv import data, kernels, models, quant


def best_of(fn, repeat):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    acc = rng.integers(-2**31, 2**31, size=200_000, dtype=np.int64)
    yield "mul_shift_round 200k", lambda nb: kernels.mul_shift_round(acc, 1_518_500_250, 38, use_numba=nb)

    x = rng.integers(-128, 128, size=(32, 18, 18, 16)).astype(np.int64)
    w = rng.integers(-128, 128, size=(3, 3, 16, 16)).astype(np.int64)
    b = rng.integers(-1000, 1000, size=16).astype(np.int64)
    yield "int conv2d 32x16x16x16", lambda nb: kernels.int_conv2d(x, w, b, 1, 0, 0, 16, 16, use_numba=nb)

    wd = rng.integers(-128, 128, size=(3, 3, 16)).astype(np.int64)
    yield "int depthwise 32x16x16x16", lambda nb: kernels.int_depthwise_conv2d(x, wd, b, 1, 0, 0, 16, 16,
                                                                               use_numba=nb)

    xd = rng.integers(-128, 128, size=(256, 512)).astype(np.int64)
    wdn = rng.integers(-128, 128, size=(512, 64)).astype(np.int64)
    bd = rng.integers(-1000, 1000, size=64).astype(np.int64)
    yield "int dense 256x512x64", lambda nb: kernels.int_dense(xd, wdn, bd, use_numba=nb)

    img = rng.random((64, 16, 16, 3)).astype(np.float32)
    yield "median 3x3 64x16x16x3", lambda nb: kernels.median_filter(img, 3, use_numba=nb)
    yield "median 5x5 64x16x16x3", lambda nb: kernels.median_filter(img, 5, use_numba=nb)

    gwin = rng.random((32, 8, 8, 3, 3, 16)).astype(np.float32)
    yield "col2im 3x3 stride 2", lambda nb: kernels.col2im(gwin, (17, 17), 2, use_numba=nb)

    splits = data.make_splits(64, 64, seed=0, n_calib=64)
    qm = quant.quantize_model(models.build_toy_resnet(seed=0), splits["calibration"].images, 8)
    xs = splits["test"].images

    def infer(nb):
        old = kernels.USE_NUMBA
        kernels.USE_NUMBA = nb
        try:
            return qm.output_codes(xs)
        finally:
            kernels.USE_NUMBA = old

    yield "int8 toy ResNet, 64 images", infer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the table as JSON")
    args = ap.parse_args()
    if not kernels.USE_NUMBA:
        print("numba disabled (TINYADV_NUMBA=0 or not installed); only the numpy column is meaningful")
    rows = []
    print(f"{'case':32s} {'numpy ms':>10s} {'numba ms':>10s} {'speed-up':>9s}")
    for name, fn in cases():
        a, b = fn(False), fn(True)
        same = np.array_equal(a, b) if a.dtype.kind in "iu" else np.allclose(a, b, rtol=1e-5, atol=1e-6)
        if not same:
            raise SystemExit(f"{name}: backends disagree")
        t_np = best_of(lambda: fn(False), args.repeat)
        t_nb = best_of(lambda: fn(True), args.repeat)
        rows.append({"case": name, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb})
        print(f"{name:32s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} {t_np / t_nb:8.1f}x")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(rows, f, indent=2)


if __name__ == "__main__":
    main()
