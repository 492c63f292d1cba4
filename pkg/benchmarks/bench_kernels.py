"""Time the numba kernels against the numpy fallbacks.

    python benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 5]

Each kernel is checked for agreement before timing. Numba compile time is
excluded by a warm-up call.
"""
import argparse
import timeit

import numpy as np

from higgsneck import _accel


def cases(n, rng):
    shape = (n, n, 2, 2)
    a = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    b = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    offs = np.array([-3, -2, -1, 1, 2, 3])
    w = np.array([-1 / 60, 3 / 20, -3 / 4, 3 / 4, -3 / 20, 1 / 60])
    return {
        "matmul2": lambda use: _accel.matmul2(a, b, use_numba=use),
        "comm2": lambda use: _accel.comm2(a, b, use_numba=use),
        "periodic_stencil": lambda use: _accel.periodic_stencil(a, offs, w, use_numba=use),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAS_NUMBA:
        print("numba unavailable (or HIGGSNECK_NUMBA=0); timing the numpy path only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':18s} {'grid':>9s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            ref = fn(False)
            t_np = min(timeit.repeat(lambda: fn(False), number=1, repeat=args.repeat))
            if _accel.HAS_NUMBA:
                assert np.allclose(fn(True), ref, rtol=1e-12, atol=1e-12), name
                t_nb = min(timeit.repeat(lambda: fn(True), number=1, repeat=args.repeat))
                nb, speed = f"{1e3 * t_nb:10.2f}", f"{t_np / t_nb:8.2f}"
            else:
                nb, speed = f"{'-':>10s}", f"{'-':>8s}"
            print(f"{name:18s} {f'{n}x{n}':>9s} {1e3 * t_np:10.2f} {nb} {speed}")


if __name__ == "__main__":
    main()
