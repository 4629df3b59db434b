"""Time the compiled Gibbs sweep against the numpy fallback.

    python3 benchmarks/bench_gibbs.py [--batch 1000] [--visible 4] [--hidden 100]

Both backends get identical random draws; the script also reports the
largest output difference between them.
"""
import argparse
import timeit

import numpy as np

from tempora import kernels
from tempora.rng import RngStream


def make_args(batch, n_vis, n_hid, gaussian, seed=0):
    rng = RngStream(seed)
    w = rng.child(0).normal((n_vis, n_hid)) * 0.1
    return (w, w, rng.child(1).normal(n_hid) * 0.1, rng.child(2).normal(n_vis) * 0.1,
            rng.child(3).normal((batch, n_vis)), rng.child(4).uniform((batch, n_hid)),
            rng.child(5).normal((batch, n_vis)) if gaussian else rng.child(5).uniform((batch, n_vis)),
            np.ones(n_vis), gaussian)


def bench(backend, args, repeat, number):
    fn = lambda: kernels.gibbs_sweep(*args, backend=backend)  # noqa: E731
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--batch", type=int, default=1000)
    p.add_argument("--visible", type=int, default=4)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--number", type=int, default=200)
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args()

    print(f"default backend: {kernels.BACKEND}")
    if kernels.BACKEND != "compiled":
        print("compiled kernel not available; build with `pip install -e . --no-build-isolation`")
    print(f"{'units':<10} {'backend':<9} {'ms/sweep':>9} {'speedup':>8} {'max diff':>9}")
    for gaussian in (True, False):
        args = make_args(a.batch, a.visible, a.hidden, gaussian)
        t_np = bench("numpy", args, a.repeat, a.number)
        label = "gaussian" if gaussian else "binary"
        print(f"{label:<10} {'numpy':<9} {t_np * 1e3:>9.3f} {1.0:>8.2f} {'':>9}")
        if kernels.BACKEND == "compiled":
            t_c = bench("compiled", args, a.repeat, a.number)
            diff = max(float(np.max(np.abs(x - y))) for x, y in zip(
                kernels.gibbs_sweep(*args, backend="compiled"),
                kernels.gibbs_sweep(*args, backend="numpy")))
            print(f"{label:<10} {'compiled':<9} {t_c * 1e3:>9.3f} {t_np / t_c:>8.2f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
