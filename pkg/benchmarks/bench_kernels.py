"""Benchmark the witness-search kernels: numba JIT vs numpy fallback.

The witness walk (first combination of at most l_max input rows whose
union covers an x-fraction of a family) is the hot loop of detection
and core extraction.  This script times both implementations on the
same packed workloads so the speedup of keeping numba around is a
number, not folklore.

Run from the repository root::

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --n-inputs 64 --members 512 --l-max 3

The numpy path is always available; the numba rows appear only when
numba is importable (XCORR_NO_NUMBA must not be set, or the JIT path
is never compiled in the first place).
"""

import argparse
import time

import numpy as np

from xcorr._kernels import HAS_NUMBA, _witness_numpy, pack_bitsets

if HAS_NUMBA:
    from xcorr._kernels import _witness_njit


def make_workload(rng, n_inputs, members, alpha):
    """Random (members, n_inputs) membership matrix packed into bitsets."""
    contains = rng.random((members, n_inputs)) < alpha
    return pack_bitsets(contains)


def run_numpy(bitsets, threshold, l_max):
    return _witness_numpy(bitsets, threshold, l_max)


def run_numba(bitsets, threshold, l_max):
    out = np.empty(l_max, dtype=np.int64)
    k = int(_witness_njit(bitsets, np.int64(threshold), np.int64(l_max), out))
    return out[:k] if k else None


def bench(fn, workloads, repeats):
    """Best-of-N wall time in milliseconds for one pass over the workloads."""
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for bitsets, threshold, l_max in workloads:
            fn(bitsets, threshold, l_max)
        best = min(best, time.perf_counter() - start)
    return 1000.0 * best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-inputs", type=int, default=48)
    parser.add_argument("--members", type=int, default=256)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--l-max", type=int, default=2)
    parser.add_argument("--cases", type=int, default=50)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    # threshold just above the densest row keeps most walks exhaustive,
    # which is the worst case detection actually hits on untargeted ads
    shapes = [
        (args.n_inputs, args.members, 1),
        (args.n_inputs, args.members, args.l_max),
        (2 * args.n_inputs, args.members, args.l_max),
        (args.n_inputs, 4 * args.members, args.l_max),
    ]
    print(f"numba available: {HAS_NUMBA}")
    print(f"{'n':>5} {'K':>6} {'l_max':>5} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for n, members, l_max in shapes:
        workloads = []
        for _ in range(args.cases):
            bitsets = make_workload(rng, n, members, args.alpha)
            threshold = int(0.9 * members)
            workloads.append((bitsets, threshold, l_max))
        if HAS_NUMBA:
            run_numba(*workloads[0])  # compile outside the timed region
        t_numpy = bench(run_numpy, workloads, args.repeats)
        if HAS_NUMBA:
            t_numba = bench(run_numba, workloads, args.repeats)
            for workload in workloads:  # same witnesses on both paths
                a, b = run_numpy(*workload), run_numba(*workload)
                assert (a is None) == (b is None)
                assert a is None or np.array_equal(a, b)
            print(
                f"{n:>5} {members:>6} {l_max:>5} {t_numpy:>10.2f} "
                f"{t_numba:>10.2f} {t_numpy / t_numba:>7.1f}x"
            )
        else:
            print(f"{n:>5} {members:>6} {l_max:>5} {t_numpy:>10.2f} {'-':>10} {'-':>8}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
