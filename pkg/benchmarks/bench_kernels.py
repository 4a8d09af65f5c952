"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import timeit

import numpy as np

from glocal import _pykernels

try:
    from glocal import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    F = rng.normal(size=(16, 32, 24))
    x = rng.normal(size=(16, 32, 24))
    taps = rng.normal(size=(32, 24, 16, 9))
    bias = rng.normal(size=(32, 24, 16))
    flow = rng.uniform(-3, 3, (2, 32, 24))
    C = rng.uniform(0, 2, (192, 192))
    a = np.full(192, 1 / 192)
    return {
        "self_correlation": lambda m: m.self_correlation(F, 1, 2),
        "loc_conv": lambda m: m.loc_conv(x, taps, bias, 3, 9.0),
        "bilinear_warp": lambda m: m.bilinear_warp(F, flow),
        "sinkhorn": lambda m: m.sinkhorn(C, a, a, 0.05, 1.0, 2000, 5e-7),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases(rng).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<18}{py:>12.3f}{'n/a':>12}{'n/a':>10}")
            continue
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<18}{py:>12.3f}{cy:>12.3f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
