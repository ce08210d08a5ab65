"""Timing comparison between the compiled and numpy convolution backends.

Run as ``python benchmarks/conv_backends.py``.  Shapes mirror the actual
training workload: 1D stacks over ~100-node grids for the mean path, 2D
stacks over ~100x100 grids for the covariance path.
"""

from __future__ import annotations

import time

import numpy as np

from gnplab import convolution


def _time(fn, *args, repeats=5):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


CASES_1D = [
    ("1d fwd  m=100 c=16 k=5", "conv1d_forward", (100, 16, 16, 5)),
    ("1d gradw m=100 c=16 k=5", "conv1d_grad_weights", (100, 16, 16, 5)),
]
CASES_2D = [
    ("2d fwd  m=60  c=8 k=5", "conv2d_forward", (60, 8, 8, 5)),
    ("2d fwd  m=100 c=8 k=5", "conv2d_forward", (100, 8, 8, 5)),
    ("2d gradw m=100 c=8 k=5", "conv2d_grad_weights", (100, 8, 8, 5)),
]


def _args_for(name, shape, rng):
    m, c_in, c_out, k = shape
    if name.startswith("conv1d"):
        x = rng.standard_normal((m, c_in))
        w = rng.standard_normal((k, c_in, c_out))
        b = np.zeros(c_out)
        gy = rng.standard_normal((m, c_out))
        return (x, gy, k) if name.endswith("grad_weights") else (x, w, b)
    x = rng.standard_normal((m, m, c_in))
    w = rng.standard_normal((k, k, c_in, c_out))
    b = np.zeros(c_out)
    gy = rng.standard_normal((m, m, c_out))
    return (x, gy, k, k) if name.endswith("grad_weights") else (x, w, b)


def run(backend):
    rng = np.random.default_rng(0)
    rows = []
    for label, fn_name, shape in CASES_1D + CASES_2D:
        fn = getattr(convolution, fn_name)
        args = _args_for(fn_name, shape, rng)
        rows.append((label, _time(fn, *args)))
    return rows


def main():
    results = {}
    for backend in ("numpy", "compiled"):
        if backend == "compiled" and not convolution.compiled_available():
            print("compiled backend not built; showing numpy only")
            continue
        convolution.select_backend(backend)
        results[backend] = run(backend)

    labels = [label for label, _ in next(iter(results.values()))]
    print(f"{'case':28s}" + "".join(f"{b:>12s}" for b in results))
    for i, label in enumerate(labels):
        cells = "".join(f"{results[b][i][1] * 1e3:10.2f}ms" for b in results)
        print(f"{label:28s}{cells}")
    if len(results) == 2:
        speedups = [results["numpy"][i][1] / results["compiled"][i][1]
                    for i in range(len(labels))]
        print(f"\ncompiled speedup: min {min(speedups):.1f}x, "
              f"max {max(speedups):.1f}x")


if __name__ == "__main__":
    main()
