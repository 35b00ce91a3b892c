import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsqkd import reconciliation as rc
from nsqkd.security import binary_entropy


def noisy_pair(n, w, rng):
    a = rng.integers(0, 2, n, dtype=np.uint8)
    b = a ^ (rng.random(n) < w).astype(np.uint8)
    return a, b


def test_config_validation():
    with pytest.raises(ValueError):
        rc.EcConfig(scheme="turbo")
    with pytest.raises(ValueError):
        rc.EcConfig(block_len=21)
    with pytest.raises(ValueError):
        rc.EcConfig(sample_fraction=1.0)


def test_syndrome_length_example():
    assert binary_entropy(0.05) == pytest.approx(0.2864, abs=1e-4)
    assert rc.syndrome_length(10**4, 0.05, 0.1) == 3864
    assert rc.syndrome_length(10, 0.5, 0.1) == 10
    assert rc.syndrome_length(0, 0.1, 0.1) == 0


@pytest.mark.parametrize("scheme", rc.SCHEMES)
def test_noiseless_round_trip(scheme):
    rng = np.random.default_rng(0)
    cfg = rc.EcConfig(scheme=scheme)
    a = rng.integers(0, 2, 1000, dtype=np.uint8)
    C = rc.error_correct_encode(a, cfg, 0.0)
    out, failed = rc.error_correct_decode(a.copy(), C, cfg, 0.0)
    assert failed == [] and np.array_equal(out, a)


@pytest.mark.parametrize("scheme", rc.SCHEMES)
def test_syndrome_is_linear(scheme):
    rng = np.random.default_rng(1)
    code = rc.build_code(200, 0.05, rc.EcConfig(scheme=scheme))
    a = rng.integers(0, 2, 200, dtype=np.uint8)
    b = rng.integers(0, 2, 200, dtype=np.uint8)
    assert np.array_equal(code.encode(a ^ b), code.encode(a) ^ code.encode(b))
    assert not code.encode(np.zeros(200, dtype=np.uint8)).any()


def test_syndrome_length_accounting():
    code = rc.build_code(10_000, 0.05, rc.EcConfig(margin=0.1))
    segs = code.segments
    assert code.syndrome_bits == sum(rc.syndrome_length(hi - lo, 0.05, 0.1) for lo, hi in segs)
    assert abs(code.syndrome_bits - 3864) <= len(segs)


def test_code_is_deterministic_in_seed():
    a = np.random.default_rng(2).integers(0, 2, 500, dtype=np.uint8)
    c1 = rc.error_correct_encode(a, rc.EcConfig(seed=5), 0.03)
    c2 = rc.error_correct_encode(a, rc.EcConfig(seed=5), 0.03)
    c3 = rc.error_correct_encode(a, rc.EcConfig(seed=6), 0.03)
    assert np.array_equal(c1, c2) and not np.array_equal(c1, c3)


def test_decode_rejects_wrong_syndrome_size():
    code = rc.build_code(100, 0.05, rc.EcConfig())
    with pytest.raises(ValueError):
        code.decode(np.zeros(100, dtype=np.uint8), np.zeros(code.syndrome_bits + 1, dtype=np.uint8))


def test_ldpc_corrects_at_default_margin():
    rng = np.random.default_rng(3)
    cfg = rc.EcConfig()
    fails = 0
    for _ in range(20):
        a, b = noisy_pair(4096, 0.05, rng)
        out, failed = rc.error_correct_decode(b, rc.error_correct_encode(a, cfg, 0.05), cfg, 0.05)
        fails += bool(failed) or not np.array_equal(out, a)
    assert fails == 0


def test_ldpc_flags_hopeless_noise():
    rng = np.random.default_rng(4)
    cfg = rc.EcConfig()
    a, b = noisy_pair(2000, 0.2, rng)
    # the code is sized for 1% noise, the channel flips 20%
    out, failed = rc.error_correct_decode(b, rc.error_correct_encode(a, cfg, 0.01), cfg, 0.01)
    assert failed


def test_block_ml_decodes_to_a_coset_leader():
    rng = np.random.default_rng(5)
    cfg = rc.EcConfig(scheme="block-ml", block_len=10)
    code = rc.build_code(10, 0.1, cfg)
    table = code.parts[0]
    a, b = noisy_pair(10, 0.1, rng)
    out, failed = code.decode(b, code.encode(a))
    assert not failed
    # whatever Bob outputs has Alice's syndrome and differs from b by a minimum-weight pattern
    assert np.array_equal(code.encode(out), code.encode(a))
    e = out ^ b
    s = int(table.syndrome(e[None, :])[0])
    assert int(e.sum()) == table.leader_weight[s]


def test_block_ml_brute_force_small():
    # exhaustive check at L = 8: leader weight equals the lightest pattern in its coset
    table = rc.coset_table(8, 4, 0)
    best = {}
    for v in range(256):
        e = np.array([(v >> j) & 1 for j in range(8)], dtype=np.uint8)
        s = int(table.syndrome(e[None, :])[0])
        best[s] = min(best.get(s, 99), int(e.sum()))
    for s, w in best.items():
        assert table.leader_weight[s] == w


@given(st.integers(4, 16), st.floats(0.001, 0.2))
@settings(max_examples=40, deadline=None)
def test_success_bound_is_a_probability(L, w):
    r = rc.syndrome_length(L, w, 0.15)
    b = rc.block_ml_success_bound(L, r, w)
    assert 0.0 < b <= 1.0 + 1e-12
    if r == L:
        assert b == pytest.approx(1.0)


def test_block_ml_measured_rate_respects_counting_bound():
    rng = np.random.default_rng(6)
    cfg = rc.EcConfig(scheme="block-ml", block_len=16, margin=0.15)
    n_blocks = 1000
    a, b = noisy_pair(16 * n_blocks, 0.05, rng)
    code = rc.build_code(a.size, 0.05, cfg)
    out, failed = code.decode(b, code.encode(a))
    wrong = (out != a).reshape(n_blocks, 16).any(axis=1).mean()
    bound = rc.block_ml_success_bound(16, rc.syndrome_length(16, 0.05, 0.15), 0.05)
    # one-sided 3 sigma: no decoder can succeed more often than the bound allows
    assert 1 - wrong <= bound + 3 * math.sqrt(bound * (1 - bound) / n_blocks)


def test_block_ml_l16_residual_block_error_below_one_percent():
    """Baseline calibration target at L = 16, w = 0.05, margin 0.15, 10^3 blocks.

    Expected to fail: ceil(16 (h(0.05) + 0.15)) = 7 syndrome bits leave 128
    cosets, and the 128 lightest patterns carry only about 0.946 of the noise
    mass, so every syndrome decoder errs on more than 5% of blocks.
    """
    rng = np.random.default_rng(7)
    cfg = rc.EcConfig(scheme="block-ml", block_len=16, margin=0.15)
    n_blocks = 1000
    a, b = noisy_pair(16 * n_blocks, 0.05, rng)
    code = rc.build_code(a.size, 0.05, cfg)
    out, _ = code.decode(b, code.encode(a))
    block_err = (out != a).reshape(n_blocks, 16).any(axis=1).mean()
    assert block_err < 1e-2


def test_ldpc_residual_block_error_below_one_percent():
    rng = np.random.default_rng(8)
    cfg = rc.EcConfig(margin=0.15)
    n_frames, n = 100, 4096
    bad = 0
    for _ in range(n_frames):
        a, b = noisy_pair(n, 0.05, rng)
        out, failed = rc.error_correct_decode(b, rc.error_correct_encode(a, cfg, 0.05), cfg, 0.05)
        bad += not np.array_equal(out, a)
    assert bad / n_frames < 1e-2
