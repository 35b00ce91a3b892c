import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsqkd import kernels
from nsqkd.reconciliation import random_sparse_parity

from _oracles import gf2_matvec, toeplitz_dense

BACKENDS = [kernels, kernels.fallback]


def test_backend_is_named():
    assert kernels.BACKEND in ("cython", "python")


def test_environment_forces_fallback():
    code = "from nsqkd import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, NSQKD_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("impl", BACKENDS, ids=["active", "fallback"])
@pytest.mark.parametrize("n,m", [(1, 1), (5, 3), (64, 64), (65, 1), (130, 70), (300, 129)])
def test_toeplitz_matches_dense_product(impl, n, m):
    rng = np.random.default_rng(n * 1000 + m)
    seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
    x = rng.integers(0, 2, n, dtype=np.uint8)
    expect = gf2_matvec(toeplitz_dense(seed, n, m), x)
    assert impl.toeplitz_hash(seed, x, m).tolist() == expect


def test_toeplitz_fft_path_agrees_with_active_backend():
    # large enough that the fallback switches to FFT convolution
    rng = np.random.default_rng(5)
    n, m = 5000, 2000
    seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
    x = rng.integers(0, 2, n, dtype=np.uint8)
    assert np.array_equal(kernels.toeplitz_hash(seed, x, m), kernels.fallback.toeplitz_hash(seed, x, m))


@pytest.mark.parametrize("impl", BACKENDS, ids=["active", "fallback"])
def test_toeplitz_rejects_bad_seed_length(impl):
    with pytest.raises(ValueError):
        impl.toeplitz_hash(np.zeros(5, np.uint8), np.zeros(4, np.uint8), 3)


@pytest.mark.parametrize("impl", BACKENDS, ids=["active", "fallback"])
def test_toeplitz_zero_output_length(impl):
    assert impl.toeplitz_hash(np.zeros(3, np.uint8), np.ones(4, np.uint8), 0).size == 0


@given(st.integers(1, 80), st.integers(1, 80), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_toeplitz_backends_agree(n, m, s):
    m = min(m, n)
    rng = np.random.default_rng(s)
    seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
    x = rng.integers(0, 2, n, dtype=np.uint8)
    assert np.array_equal(kernels.toeplitz_hash(seed, x, m), kernels.fallback.toeplitz_hash(seed, x, m))


@given(st.integers(2, 60), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_toeplitz_is_linear(n, s):
    rng = np.random.default_rng(s)
    m = max(1, n // 2)
    seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
    x = rng.integers(0, 2, n, dtype=np.uint8)
    y = rng.integers(0, 2, n, dtype=np.uint8)
    h = kernels.toeplitz_hash
    assert np.array_equal(h(seed, x ^ y, m), h(seed, x, m) ^ h(seed, y, m))


@pytest.mark.parametrize("impl", BACKENDS, ids=["active", "fallback"])
def test_csr_syndrome_matches_dense(impl):
    rng = np.random.default_rng(2)
    H = random_sparse_parity(40, 100, rng)
    x = rng.integers(0, 2, 100, dtype=np.uint8)
    dense = H.dense().astype(int)
    assert impl.csr_syndrome(H.row_ptr, H.col_idx, x).tolist() == ((dense @ x) % 2).tolist()


@pytest.mark.parametrize("impl", BACKENDS, ids=["active", "fallback"])
def test_bp_recovers_sparse_error(impl):
    rng = np.random.default_rng(3)
    n, w = 2000, 0.03
    H = random_sparse_parity(900, n, rng)
    e = (rng.random(n) < w).astype(np.uint8)
    s = kernels.csr_syndrome(H.row_ptr, H.col_idx, e)
    est, ok, iters = impl.bp_decode(H.row_ptr, H.col_idx, n, s, np.full(n, np.log((1 - w) / w)), 60)
    assert ok
    assert iters >= 1
    assert np.array_equal(kernels.csr_syndrome(H.row_ptr, H.col_idx, est), s)
    assert np.array_equal(est, e)


@pytest.mark.parametrize("impl", BACKENDS, ids=["active", "fallback"])
def test_bp_zero_syndrome_returns_immediately(impl):
    rng = np.random.default_rng(4)
    H = random_sparse_parity(10, 30, rng)
    est, ok, iters = impl.bp_decode(H.row_ptr, H.col_idx, 30, np.zeros(10, np.uint8), np.full(30, 3.0), 10)
    assert ok and iters == 0 and not est.any()


def test_bp_backends_agree_on_outcome():
    rng = np.random.default_rng(6)
    n = 1500
    for trial in range(5):
        w = 0.02 + 0.01 * trial
        H = random_sparse_parity(int(n * 0.6), n, rng)
        e = (rng.random(n) < w).astype(np.uint8)
        s = kernels.csr_syndrome(H.row_ptr, H.col_idx, e)
        llr = np.full(n, np.log((1 - w) / w))
        a = kernels.bp_decode(H.row_ptr, H.col_idx, n, s, llr, 50)
        b = kernels.fallback.bp_decode(H.row_ptr, H.col_idx, n, s, llr, 50)
        assert a[1] == b[1]
        assert np.array_equal(a[0], b[0])
