"""Time each hot kernel on the compiled extension and on the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per kernel for both backends and the speedup.
If the extension is not built only the fallback column is filled in.
"""
import argparse
import timeit

import numpy as np

from mixsca import _fallback

try:
    from mixsca import _ckernels
except ImportError:
    _ckernels = None


def workloads(rng):
    x = rng.normal(size=(100, 110, 8))
    w = rng.normal(size=(11, 8, 16))
    b = rng.normal(size=16)
    dout = rng.normal(size=(100, 100, 16))
    h = rng.integers(0, 9, size=(2000, 256)).astype(np.float64)
    tr = rng.normal(size=(2000, 100))
    logp = np.log(rng.dirichlet(np.ones(9), size=5000))
    labels = rng.integers(0, 9, size=(5000, 256))
    order = rng.permutation(5000)
    counts = rng.integers(0, 4, size=2000)
    positions = np.sort(rng.integers(0, 100, size=(2000, 3)), axis=1)
    return {
        "conv1d_forward": lambda k: k.conv1d_forward(x, w, b, 1),
        "conv1d_backward": lambda k: k.conv1d_backward(x, w, dout, 1),
        "cpa_sums": lambda k: k.cpa_sums(h, tr),
        "prefix_ranks": lambda k: k.prefix_ranks(logp, labels, order, 3),
        "insert_delays": lambda k: k.insert_delays(tr, positions, counts, 5),
    }


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    cases = workloads(np.random.default_rng(0))
    print(f"{'kernel':<18}{'numpy (ms)':>12}{'cython (ms)':>13}{'speedup':>9}")
    for name, run in cases.items():
        py = best_time(lambda: run(_fallback), args.repeat) * 1e3
        if _ckernels is None:
            print(f"{name:<18}{py:>12.2f}{'-':>13}{'-':>9}")
            continue
        cy = best_time(lambda: run(_ckernels), args.repeat) * 1e3
        print(f"{name:<18}{py:>12.2f}{cy:>13.2f}{py / cy:>8.1f}x")


if __name__ == "__main__":
    main()
