"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_kernels`` module; selected by
:mod:`nsqkd.kernels` when the extension is unavailable.
"""

import numpy as np
from scipy.signal import fftconvolve

# below this many multiply-adds np.convolve beats the FFT
_DIRECT_LIMIT = 1 << 22
# magnitude clip for tanh messages
_LO = 1e-15
_HI = 1.0 - 1e-15


def toeplitz_hash(seed, x, out_len):
    """GF(2) product of the Toeplitz matrix ``T[i, j] = seed[i - j + n - 1]`` with ``x``."""
    seed = np.asarray(seed, dtype=np.uint8)
    x = np.asarray(x, dtype=np.uint8)
    n = x.shape[0]
    if out_len == 0 or n == 0:
        return np.zeros(out_len, dtype=np.uint8)
    if seed.shape[0] != n + out_len - 1:
        raise ValueError("seed length must be in_len + out_len - 1")
    if n * out_len <= _DIRECT_LIMIT:
        full = np.convolve(seed.astype(np.int64), x.astype(np.int64))
        window = full[n - 1 : n - 1 + out_len]
    else:
        full = fftconvolve(seed.astype(np.float64), x.astype(np.float64))
        window = np.rint(full[n - 1 : n - 1 + out_len]).astype(np.int64)
    return (window & 1).astype(np.uint8)


def csr_syndrome(row_ptr, col_idx, x):
    """Parity of ``x`` over each row of a sparse GF(2) matrix in CSR form."""
    row_ptr = np.asarray(row_ptr, dtype=np.int64)
    col_idx = np.asarray(col_idx, dtype=np.int64)
    x = np.asarray(x, dtype=np.uint8)
    n_rows = row_ptr.shape[0] - 1
    rows = np.repeat(np.arange(n_rows), np.diff(row_ptr))
    counts = np.bincount(rows, weights=x[col_idx], minlength=n_rows)
    return (counts.astype(np.int64) & 1).astype(np.uint8)


def bp_decode(row_ptr, col_idx, n_vars, syndrome, prior_llr, max_iter):
    """Sum-product syndrome decoding on a Tanner graph.

    Finds a likely error pattern ``e`` with ``H e = syndrome`` given per-bit
    log-likelihood ratios ``log P(e=0)/P(e=1)``.

    Returns
    -------
    (e, converged, iterations)
    """
    row_ptr = np.asarray(row_ptr, dtype=np.int64)
    col_idx = np.asarray(col_idx, dtype=np.int64)
    syndrome = np.asarray(syndrome, dtype=np.uint8)
    prior = np.asarray(prior_llr, dtype=np.float64)
    n_rows = row_ptr.shape[0] - 1
    rows = np.repeat(np.arange(n_rows), np.diff(row_ptr))

    e = (prior < 0).astype(np.uint8)
    if np.array_equal(csr_syndrome(row_ptr, col_idx, e), syndrome):
        return e, True, 0

    v2c = prior[col_idx].copy()
    starts = row_ptr[:-1][np.diff(row_ptr) > 0]
    sign = np.where(syndrome[rows] == 1, -1.0, 1.0)
    for it in range(1, max_iter + 1):
        t = np.tanh(0.5 * v2c)
        # signed magnitude clipped to [lo, hi]; zero counts as +lo
        t = np.copysign(np.clip(np.abs(t), _LO, _HI), np.where(t < 0, -1.0, 1.0))
        row_prod = np.ones(n_rows)
        row_prod[np.flatnonzero(np.diff(row_ptr) > 0)] = np.multiply.reduceat(t, starts)
        # leave-one-out product by division; |t| >= lo keeps it finite
        ext = np.clip(sign * row_prod[rows] / t, -_HI, _HI)
        c2v = 2.0 * np.arctanh(ext)

        post = prior + np.bincount(col_idx, weights=c2v, minlength=n_vars)
        e = (post < 0).astype(np.uint8)
        if np.array_equal(csr_syndrome(row_ptr, col_idx, e), syndrome):
            return e, True, it
        v2c = post[col_idx] - c2v
    return e, False, max_iter
