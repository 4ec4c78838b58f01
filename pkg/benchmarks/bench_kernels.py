"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

The first numba call (compilation, or loading from the on-disk cache) is
excluded from the timings.
"""

import argparse
import timeit

import numpy as np

from rqnn import _kernels as K


def cases(rng):
    n, D, m = 1024, 2, 4096
    A = rng.normal(size=(n, D))
    b = rng.uniform(0, 2 * np.pi, n)
    coef = rng.normal(size=n) / n
    gamma = rng.uniform(0, 2 * np.pi, n)
    U = rng.uniform(-1, 1, (m, D))
    N, S, T = 3, 8, 300
    A3 = rng.normal(size=(N, 256, N + 1))
    b3 = rng.uniform(0, 6, (N, 256))
    c3 = rng.normal(size=(N, 256)) / 256
    P = np.zeros((N, N, N))
    Z = rng.uniform(-1, 1, (S, T, 1))
    x0 = np.zeros((S, N))
    return {
        "feature_values (n=1024, m=4096)": ("feature_values", (A, b, coef, U)),
        "feature_grads  (n=1024, m=4096)": ("feature_grads", (A, b, coef, U)),
        "class_probs    (n=1024, m=4096)": ("class_probs", (A, b, gamma, U)),
        "run_states     (N=3, n=256, 8x300)": ("run_states", (A3, b3, c3, P, False, Z, x0)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba not installed; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  max|diff|")
    for label, (name, args_) in cases(rng).items():
        f_np, f_nb = getattr(K, "_np_" + name), getattr(K, "_nb_" + name)
        ref, got = f_np(*args_), f_nb(*args_)    # also triggers compilation
        t_np = min(timeit.repeat(lambda: f_np(*args_), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: f_nb(*args_), number=1, repeat=args.repeat))
        print(f"{label:36s} {1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:8.1f}  {np.max(np.abs(ref - got)):.1e}")


if __name__ == "__main__":
    main()
