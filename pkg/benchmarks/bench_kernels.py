"""Time every hot kernel on the numba path and the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats 5] [--json]

Each kernel is called once to warm up (and compile) before timing.  The
last section times one forward+backward training step of the default
network at batch 4, on whichever path is active, for a sense of scale.
"""
import argparse
import json
import statistics
import time

import numpy as np

from parconv import _accel, kernels


def _time(fn, repeats):
    fn()
    runs = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - start)
    return statistics.median(runs) * 1e3


def cases(rng):
    frames = rng.standard_normal((256, 2048))
    x = rng.standard_normal((4, 64, 64, 64)).astype(np.float32)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = kernels._im2col_np(xp, 3, 64, 64)
    small_x = rng.standard_normal((1, 8, 12, 12))
    small_w = rng.standard_normal((8, 4, 3, 3))
    return {
        "fft_rows 256x2048": lambda: kernels.fft_rows(frames),
        "im2col 4x64x64x64 k3": lambda: kernels.im2col(xp, 3, 64, 64),
        "col2im 4x64x64x64 k3": lambda: kernels.col2im(cols, 64, 3, 64, 64),
        "avg_pool2 4x64x64x64": lambda: kernels.avg_pool2(x),
        "avg_pool2_backward 4x64x32x32": lambda: kernels.avg_pool2_backward(x[:, :, :32, :32]),
        "conv2d_direct_counted 8x12x12 g2": lambda: kernels.conv2d_direct_counted(small_x, small_w, 2),
    }


def train_step_ms(repeats):
    from parconv import ops
    from parconv.network import build_network

    model = build_network(seed=0)
    rng = np.random.default_rng(0)
    x = rng.random((4, 1, 128, 128)).astype(np.float32)
    y = rng.integers(0, 7, 4)

    def step():
        loss = ops.softmax_cross_entropy(model.forward(x), y)
        loss.backward()

    return _time(step, repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--json", action="store_true")
    parser.add_argument("--skip-step", action="store_true", help="skip the full training-step timing")
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    results = {}
    for name, fn in cases(rng).items():
        row = {}
        for path in ("jit", "numpy"):
            if path == "jit" and not _accel.HAVE_NUMBA:
                continue
            kernels.USE_JIT = path == "jit"
            row[path] = _time(fn, args.repeats)
        results[name] = row
    kernels.USE_JIT = _accel.USE_JIT
    step = None if args.skip_step else train_step_ms(max(1, args.repeats // 2))
    if args.json:
        print(json.dumps({"kernels_ms": results, "train_step_batch4_ms": step}, indent=2))
        return
    print(f"{'kernel':<36} {'jit ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, row in results.items():
        jit, npy = row.get("jit"), row["numpy"]
        ratio = f"{npy / jit:8.2f}" if jit else "     n/a"
        print(f"{name:<36} {jit if jit else float('nan'):>10.2f} {npy:>10.2f} {ratio}")
    if step is not None:
        print(f"\ntrain step, default network, batch 4 ({'jit' if _accel.USE_JIT else 'numpy'} path): {step:.0f} ms")


if __name__ == "__main__":
    main()
