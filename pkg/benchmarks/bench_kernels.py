"""Time the compiled kernels against their plain-Python bodies.

    python3 benchmarks/bench_kernels.py [n]

The Python path is the same function object's ``py_func``, so both columns
run identical code. Needs the numba backend (unset COALPOINT_DISABLE_NUMBA).
"""
import sys
import time

import numpy as np

from coalpoint import _accel, _kernels
from coalpoint.genealogy import simulate
from coalpoint.mutation import overlay
from coalpoint.scale_model import Yule


def best_of(fn, args, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(n=10**5):
    if not _accel.USE_NUMBA:
        sys.exit("numba backend disabled; nothing to compare")
    rng = np.random.default_rng(0)
    s = simulate(Yule(1.0), n, rng)
    ov = overlay(s, 1.0, rng)
    h, nt = s.h, s.next_taller
    w = np.ones(ov.heights.size, dtype=np.int64)
    jobs = {
        "next_taller": (_kernels.next_taller, (h,)),
        "site_spectrum": (_kernels.site_spectrum, (h, nt, ov.offsets, ov.heights, w)),
        "haplotype_keys": (_kernels.haplotype_keys, (h, ov.offsets, ov.heights)),
        "subtending_measures": (_kernels.subtending_measures, (h, nt, s.max_length)),
        "carrier_interval_table": (_kernels.carrier_interval_table, (h, nt, s.max_length)),
    }
    print(f"n={n}, mutations={ov.heights.size}")
    print(f"{'kernel':<24}{'numba s':>12}{'python s':>12}{'speedup':>10}")
    for name, (fn, args) in jobs.items():
        fn(*args)  # compile outside the timing
        fast = best_of(fn, args)
        slow = best_of(fn.py_func, args, repeat=1)
        print(f"{name:<24}{fast:>12.5f}{slow:>12.4f}{slow / fast:>10.0f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 10**5)
