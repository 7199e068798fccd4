"""Time the compiled and pure-Python Euler-Maruyama kernels.

Usage: ``python benchmarks/bench_kernels.py [--particles N] [--steps n] [--repeat k]``
"""
import argparse
import timeit

import numpy as np

from mvlse import _kernels_py

try:
    from mvlse import _kernels
except ImportError:  # extension not built
    _kernels = None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, default=256)
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--memory", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    delta = 1.0 / args.steps
    rng = np.random.default_rng(0)
    dB = rng.standard_normal((args.particles, args.steps)) * np.sqrt(delta)
    hist = np.full(args.memory + 1, 0.5)

    impls = [("python", _kernels_py)]
    if _kernels is not None:
        impls.insert(0, ("compiled", _kernels))
    else:
        print("compiled extension not available; timing the fallback only")

    outputs = {}
    times = {}
    for name, impl in impls:
        call = lambda: impl.em_example(hist, 1.0, 0.5, 0.05, delta, dB, 1)
        outputs[name] = call()
        times[name] = min(timeit.repeat(call, number=1, repeat=args.repeat))
        print(f"{name:>9}: {1e3 * times[name]:8.1f} ms  (N={args.particles}, n={args.steps}, M={args.memory})")
    if len(times) == 2:
        diff = np.max(np.abs(outputs["compiled"] - outputs["python"]))
        print(f"  speedup: {times['python'] / times['compiled']:.2f}x, max abs difference {diff:.1e}")


if __name__ == "__main__":
    main()
