"""Compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Prints the best-of-``repeat``
wall time per call and the speed-up for each kernel.
"""

import argparse
import timeit

import numpy as np

from nsqkd import kernels
from nsqkd.reconciliation import random_sparse_parity, syndrome_length


def _cases(rng):
    cases = []
    for n, m in ((4096, 1024), (100_000, 40_000)):
        seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
        x = rng.integers(0, 2, n, dtype=np.uint8)
        cases.append((f"toeplitz {n}->{m}", "toeplitz_hash", (seed, x, m)))

    n = 4096
    w = 0.05
    H = random_sparse_parity(syndrome_length(n, w, 0.15), n, rng)
    x = rng.integers(0, 2, n, dtype=np.uint8)
    cases.append((f"syndrome {H.n_rows}x{n}", "csr_syndrome", (H.row_ptr, H.col_idx, x)))

    e = (rng.random(n) < w).astype(np.uint8)
    s = kernels.csr_syndrome(H.row_ptr, H.col_idx, e)
    llr = np.full(n, np.log((1 - w) / w))
    cases.append((f"bp decode n={n} w={w}", "bp_decode", (H.row_ptr, H.col_idx, n, s, llr, 60)))
    return cases


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if kernels.BACKEND != "cython":
        print("compiled kernels unavailable; only the fallback can be timed")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<28}{'compiled (ms)':>15}{'fallback (ms)':>15}{'speed-up':>10}")
    for label, name, call_args in _cases(rng):
        fast = getattr(kernels, name)
        slow = getattr(kernels.fallback, name)
        ref = slow(*call_args)
        out = fast(*call_args)
        ref0 = ref[0] if isinstance(ref, tuple) else ref
        out0 = out[0] if isinstance(out, tuple) else out
        if not np.array_equal(ref0, out0):
            raise SystemExit(f"{label}: backends disagree")
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
        print(f"{label:<28}{1e3 * t_fast:>15.3f}{1e3 * t_slow:>15.3f}{t_slow / t_fast:>10.1f}")


if __name__ == "__main__":
    main()
