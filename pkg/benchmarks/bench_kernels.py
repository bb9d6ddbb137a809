"""Compare the compiled kernels against the NumPy fallback.

Run: python benchmarks/bench_kernels.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from autocorrnet import _kernels_py

try:
    from autocorrnet import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def cases(rng):
    innov = rng.standard_normal(1_000_000)
    e = rng.standard_normal(1_000_000)
    size = 64 * 64
    p, g = rng.standard_normal(size), rng.standard_normal(size)
    m, v = np.zeros(size), np.zeros(size)
    return {
        "ar1_filter (T=1e6)": lambda k: k.ar1_filter(innov, 0.5),
        "lag_sums (T=1e6)": lambda k: k.lag_sums(e),
        "adam_update (4096 params)": lambda k: k.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels_py)] + ([("compiled", compiled)] if compiled is not None else [])
    print(f"{'kernel':<28}" + "".join(f"{name:>14}" for name, _ in backends) + ("   speedup" if compiled else ""))
    for label, fn in cases(np.random.default_rng(0)).items():
        times = []
        for _, mod in backends:
            number = 1 if "ar1" in label and mod is _kernels_py else 10
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            times.append(best)
        row = f"{label:<28}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times)
        if len(times) == 2:
            row += f"   {times[0] / times[1]:>6.1f}x"
        print(row)
    if compiled is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
