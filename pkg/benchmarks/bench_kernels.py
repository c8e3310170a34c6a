"""Benchmark the compiled Schatten kernel against the numpy fallback.

Times batched value+gradient evaluation over node batches of the sizes a
registration run actually produces (one 2 x T matrix per grid node).

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from sqnreg.kernels import HAVE_COMPILED, backend, schatten_batch


def bench(batch, q, eps, force_backend, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        schatten_batch(batch, q, eps, force_backend=force_backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"active backend: {backend()}  (compiled available: {HAVE_COMPILED})")
    print(f"{'nodes':>8} {'T':>3} {'q':>4} | {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for n in (4096, 16384, 65536):
        for T in (5, 20):
            for q in (0.5, 1.0):
                batch = rng.normal(size=(n, 2, T))
                t_np = bench(batch, q, 1e-3, "numpy", args.repeats)
                if HAVE_COMPILED:
                    t_cy = bench(batch, q, 1e-3, "compiled", args.repeats)
                    print(
                        f"{n:>8} {T:>3} {q:>4} | {t_np * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms"
                        f" {t_np / t_cy:>7.2f}x"
                    )
                else:
                    print(f"{n:>8} {T:>3} {q:>4} | {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
