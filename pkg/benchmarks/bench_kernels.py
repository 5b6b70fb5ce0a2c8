"""Compare the compiled kernels against the pure-NumPy fallback.

Run: python benchmarks/bench_kernels.py [--repeats N]

The convolution path is BLAS-bound in both backends (the GEMM is shared),
so im2col/col2im deltas are modest; the serial kernels (exact distance
transform, splatting) are where the extension pays off.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from motionprop._kernels import _numpy_backend, get_backend


def timeit(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench(native, repeats):
    rng = np.random.default_rng(0)
    rows = []

    x = rng.standard_normal((8, 80, 16, 16)).astype(np.float32)
    args = (3, 3, 1, 1, 1, 1, 1, 1)
    rows.append(("im2col 8x80x16x16 k3", lambda b: lambda: b.im2col(x, *args)))

    cols = _numpy_backend.im2col(x, *args)
    rows.append(
        (
            "col2im 8x80x16x16 k3",
            lambda b: lambda: b.col2im(cols, 8, 80, 16, 16, *args),
        )
    )

    xe = rng.standard_normal((8, 3, 64, 64)).astype(np.float32)
    argse = (3, 3, 1, 1, 1, 1, 1, 1)
    rows.append(("im2col 8x3x64x64 k3", lambda b: lambda: b.im2col(xe, *argse)))

    edges64 = (rng.random((64, 64)) < 0.05).astype(np.uint8)
    rows.append(("edt 64x64", lambda b: lambda: b.edt_sqdist(edges64)))
    edges384 = (rng.random((384, 384)) < 0.02).astype(np.uint8)
    rows.append(("edt 384x384", lambda b: lambda: b.edt_sqdist(edges384)))

    vals = rng.random((256, 256, 3))
    u = rng.normal(0, 4, (256, 256))
    v = rng.normal(0, 4, (256, 256))

    def splat(b):
        def run():
            acc = np.zeros((256, 256, 3))
            w = np.zeros((256, 256))
            b.splat_add(vals, u, v, acc, w)

        return run

    rows.append(("splat 256x256x3", splat))

    print(f"{'kernel':<24} {'numpy':>12} {'native':>12} {'speedup':>9}")
    for name, make in rows:
        t_py = timeit(make(_numpy_backend), repeats)
        t_na = timeit(make(native), repeats)
        print(f"{name:<24} {t_py * 1e3:>10.2f}ms {t_na * 1e3:>10.2f}ms {t_py / t_na:>8.1f}x")


def bench_training_step(repeats):
    """Full batch step (forward + backward + SGD + guidance sampling for
    a fresh batch) under each backend, swapped via the kernel selector."""
    import motionprop._kernels as K
    from motionprop.training import build_batch, desk_preset, load_items, DataConfig, SyntheticSpec
    from motionprop.engine.optim import OptimizerConfig, sgd_step, zero_grads
    from motionprop.model import ArchConfig, MotionPropNet

    from dataclasses import replace

    cfg = desk_preset("/tmp/bench")
    cfg = replace(cfg, data=DataConfig(synthetic=SyntheticSpec(corpus_size=64, image_size=72, seed=7)))
    items = load_items(cfg)
    opt = OptimizerConfig()
    results = {}
    original = K._impl
    try:
        for backend in ("python", "native"):
            K._impl = K.get_backend(backend)
            model = MotionPropNet(ArchConfig(), seed=0)
            params = list(model.parameters().values())
            counter = [0]

            def step():
                img, gd, xl, yl, _, _ = build_batch(items, cfg, counter[0])
                counter[0] += 1
                zero_grads(params)
                pred = model.forward(img, gd, train=True)
                _, _, _, gx, gy = model.loss(pred, xl, yl)
                model.backward(gx, gy)
                sgd_step(params, opt, 0)

            results[backend] = timeit(step, repeats)
    finally:
        K._impl = original
    print(
        f"{'train step b8 64px':<24} {results['python'] * 1e3:>10.2f}ms "
        f"{results['native'] * 1e3:>10.2f}ms {results['python'] / results['native']:>8.1f}x"
    )


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--train-step", action="store_true", help="also time a full training step per backend")
    args = ap.parse_args()
    try:
        native = get_backend("native")
    except ImportError:
        print("native backend unavailable; build the extension first")
        return
    bench(native, args.repeats)
    if args.train_step:
        bench_training_step(max(3, args.repeats // 4))


if __name__ == "__main__":
    main()
