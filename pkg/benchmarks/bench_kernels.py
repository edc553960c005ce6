"""Benchmark the Cython kernel core against the pure-numpy fallback.

Runs im2col, col2im and the exact squared EDT on representative shapes
with both backends, checks the results agree, and prints a timing table.

    python3 benchmarks/bench_kernels.py [--repeats 20]

Backends are imported directly so the SEGADV_KERNELS switch does not
matter here; if the compiled core is missing only numpy is timed.
"""

import argparse
import time

import numpy as np

from segadv.kernels import numpy_backend

try:
    from segadv.kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_case(name, make_args, run, check, repeats):
    args = make_args()
    results = {}
    timings = {}
    backends = [("numpy", numpy_backend)]
    if _core is not None:
        backends.append(("cython", _core))
    for label, impl in backends:
        results[label] = run(impl, args)
        timings[label] = timeit(lambda: run(impl, args), repeats)
    if len(results) == 2:
        check(results["numpy"], results["cython"])
        speedup = timings["numpy"] / timings["cython"]
        print(f"{name:<28} numpy {timings['numpy'] * 1e3:8.3f} ms   "
              f"cython {timings['cython'] * 1e3:8.3f} ms   "
              f"speedup {speedup:5.2f}x")
    else:
        print(f"{name:<28} numpy {timings['numpy'] * 1e3:8.3f} ms   "
              f"(cython core not built)")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20,
                        help="take the best of this many runs")
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    def close(a, b):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    for c, h, w, k, stride, pad in [(3, 64, 64, 3, 1, 1),
                                    (16, 64, 64, 3, 1, 1),
                                    (16, 128, 128, 3, 2, 1)]:
        x = rng.normal(size=(c, h, w))
        bench_case(
            f"im2col {c}x{h}x{w} k{k}s{stride}",
            lambda: x,
            lambda impl, a: impl.im2col(a, k, k, stride, pad),
            close, args.repeats)

        oh = (h + 2 * pad - k) // stride + 1
        cols = rng.normal(size=(c * k * k, oh * oh))
        bench_case(
            f"col2im {c}x{h}x{w} k{k}s{stride}",
            lambda: cols,
            lambda impl, a: impl.col2im(a, c, h, w, k, k, stride, pad),
            close, args.repeats)

    for h, w, density in [(64, 64, 0.05), (256, 256, 0.01), (256, 256, 0.3)]:
        mask = rng.random((h, w)) < density
        mask[h // 2, w // 2] = True

        def run_edt(impl, a):
            if impl is _core:
                return impl.edt_sq(a.astype(np.uint8))
            return impl.edt_sq(a)

        bench_case(
            f"edt_sq {h}x{w} p={density}",
            lambda: mask,
            run_edt,
            lambda a, b: np.testing.assert_array_equal(a, b),
            args.repeats)


if __name__ == "__main__":
    main()
