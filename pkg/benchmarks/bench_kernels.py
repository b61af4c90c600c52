"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 1000] [--dim 3] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from proxkdr import _pykernels

try:
    from proxkdr import _ckernels
except ImportError:
    _ckernels = None


def cases(n, dim, rng):
    a = rng.standard_normal((n, dim))
    b = rng.standard_normal((n, dim))
    w = rng.standard_normal(n)
    u = rng.uniform(-2, 2, n * 100)
    return {
        "sq_dists": lambda m: m.sq_dists(a, b),
        "gaussian_gram": lambda m: m.gaussian_gram(a, b, 0.5),
        "gaussian_expand": lambda m: m.gaussian_expand(a, b, w, 0.5),
        "epanechnikov": lambda m: m.epanechnikov(u, 0.7),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--dim", type=int, default=3)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the numpy timings are shown")
    rng = np.random.default_rng(0)
    print(f"n={args.n} dim={args.dim} (best of {args.repeat}, ms)")
    print(f"{'kernel':<18}{'numpy':>10}{'cython':>10}{'speedup':>10}")
    for name, fn in cases(args.n, args.dim, rng).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<18}{py:>10.2f}")
            continue
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        assert np.allclose(fn(_pykernels), fn(_ckernels), rtol=1e-9, atol=1e-12)
        print(f"{name:<18}{py:>10.2f}{cy:>10.2f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
