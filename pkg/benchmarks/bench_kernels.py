"""Wall-clock comparison of the numba kernels and the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

The numba timings exclude compilation (one warm-up call per kernel).
"""
import argparse
import time

import numpy as np

from mechlab import kernels


def _cases(rng):
    a, b = rng.normal(size=(2, 25, 25))
    c_scalar = 1.0 + 0.3 * rng.standard_normal((200_000, 1))
    a20, b20 = rng.lognormal(size=(2, 20))
    c_diag = np.broadcast_to(a20 * b20, (20_000, 20)).copy()
    B, T, F = 200, 2000, 5
    K1 = rng.normal(size=(B, F)) + 1j * rng.normal(size=(B, F))
    K2 = rng.normal(size=(B, F)) + 1j * rng.normal(size=(B, F))
    tgt = K1[0] * K2[0]
    nr, ni = rng.normal(size=(2, B, T, F))
    return {
        "conv2d 25x25": ("conv2d", (a, b)),
        "sgd scalar 2e5": ("factor_sgd_run", (np.ones(1) * 2, np.ones(1) * 0.5, c_scalar, 0.01, False, 0.0, 1)),
        "sgd diag 20x2e4 +reg": ("factor_sgd_run", (a20, b20, c_diag, 0.001, False, 0.01, 1)),
        "ctgd rk4 1e5": ("ctgd_rk4", (2.0, 1.0, 1.0, 1e-3, 100_000)),
        "fourier 200x2000": ("fourier_sgd_chunk", (K1, K2, tgt, nr, ni, 0.01, 0.1, 1, 0, False)),
    }


def _best(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if kernels.numba_backend is None:
        raise SystemExit("numba is not importable")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for label, (name, call) in _cases(rng).items():
        f_np = getattr(kernels.numpy_backend, name)
        f_nb = getattr(kernels.numba_backend, name)
        f_nb(*call)  # compile
        t_np = _best(f_np, call, args.repeat)
        t_nb = _best(f_nb, call, args.repeat)
        print(f"{label:<24}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
