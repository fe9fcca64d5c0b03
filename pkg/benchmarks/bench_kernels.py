"""Compare the numba and numpy implementations of each kernel.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--size S]

Each kernel is run once untimed (to trigger JIT compilation), then timed
as the best of N repeats.  Outputs are checked for agreement.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from hojabr import kernels as K


def cases(size: int, rng: np.random.Generator):
    M = rng.normal(size=(size, size))
    M[rng.random(M.shape) < 0.9] = 0.0
    P, I, V = K.dense_to_csr_np(M)
    adj = rng.random((size // 4, size // 4)) < 4.0 / size
    codes = rng.integers(0, size // 8, size=(size * 8, 2))
    codes = codes[np.lexsort(codes.T[::-1])]
    rhs = rng.integers(0, 2, size=(len(codes), 1))
    return {
        "csr_to_coo": (P, I, V),
        "dense_to_csr": (M,),
        "nonzero_flat": (M.reshape(-1),),
        "closure": (adj,),
        "group_scan": (np.ascontiguousarray(codes), np.ascontiguousarray(rhs)),
    }


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not K.HAVE_NUMBA:
        print("numba is not installed; only the numpy kernels can run")
    print(f"{'kernel':<14}{'numpy ms':>11}{'numba ms':>11}{'speedup':>10}  agree")
    for name, inputs in cases(args.size, np.random.default_rng(args.seed)).items():
        f_np = getattr(K, f"{name}_np")
        f_nb = getattr(K, f"{name}_nb")
        ref = f_np(*inputs)
        t_np = min(timeit.repeat(lambda: f_np(*inputs), number=1, repeat=args.repeat)) * 1e3
        if f_nb is None:
            print(f"{name:<14}{t_np:>11.3f}{'-':>11}{'-':>10}  -")
            continue
        out = f_nb(*inputs)
        t_nb = min(timeit.repeat(lambda: f_nb(*inputs), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<14}{t_np:>11.3f}{t_nb:>11.3f}{t_np / t_nb:>9.1f}x  {same(ref, out)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
