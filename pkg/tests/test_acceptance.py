"""Exit criteria of the build, one test per criterion.

Each test runs at the stated tolerance and wall-clock budget. The terminal
summary (see conftest.py) prints one PASS/FAIL line per criterion.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from nsqkd import boxcore as bx
from nsqkd import stats
from nsqkd.cli import main
from nsqkd.hashing import collision_count
from nsqkd.lpverify import max_guessing, tripartite_from_mixture
from nsqkd.protocol import measure, sample_bc_estimates
from nsqkd.quantum import EprParams, epr_box, expected_bc
from nsqkd.security import (
    honest_rate,
    key_distance_exact,
    key_table,
    log2_pa_bound,
    output_length,
    p_min,
    pa_bound,
)

from _oracles import bc_mean, binary_entropy, born_box

pytestmark = pytest.mark.acceptance


def closed_form_rate(p, M):
    B = 0.5 + M * (p * math.sin(math.pi / (4 * M)) ** 2 + (1 - p) / 2)
    return 2 * math.log2(1 / (math.sqrt(2) * B)) - binary_entropy((1 - p) / 2)


def test_c01_noise_threshold():
    t0 = time.perf_counter()
    p = p_min(6, 1e-9)
    elapsed = time.perf_counter() - t0
    assert 0.970 <= p <= 0.974
    assert elapsed < 1.0


def test_c02_rate_increases_with_m():
    Ms = [3, 4, 6, 11, 100]
    rates = [honest_rate(1.0, M) for M in Ms]
    assert all(r1 < r2 for r1, r2 in zip(rates, rates[1:]))
    assert rates[-1] > 0.96
    for M, r in zip(Ms, rates):
        assert abs(r - closed_form_rate(1.0, M)) <= 1e-3


def test_c03_m2_yields_no_key():
    assert all(honest_rate(p, 2) < 0 for p in np.linspace(0.0, 1.0, 1000))


def test_c04_born_rule_consistency():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    n = 10**5
    for p in (0.0, 0.3, 0.6, 0.9, 1.0):
        for M in (2, 3, 6, 11):
            box = epr_box(EprParams(p, M))
            assert abs(bx.bc_value(box) - expected_bc(p, M)) <= 1e-10
            assert abs(bc_mean(born_box(p, M), M) - expected_bc(p, M)) <= 1e-10
            A, B = measure(box, np.zeros(n, dtype=int), np.full(n, M), rng)
            w = (1 - p) / 2
            sigma = math.sqrt(max(w * (1 - w), 1e-300) / n)
            assert abs(np.mean(A != B) - w) <= 5 * sigma
    assert time.perf_counter() - t0 < 10.0


def crossed_pair_box(rng, M):
    """Two-pair box whose no-signaling correlations run between A1-B2 and A2-B1."""
    q1 = bx.random_nonsignaling_box(M, rng).entries  # (a1, b2, x1, y2)
    q2 = bx.random_nonsignaling_box(M, rng).entries  # (a2, b1, x2, y1)
    P = np.einsum("adxw,bcyv->abcdxyvw", q1, q2)
    return bx.NBox(P)


def random_two_pair_box(rng, M):
    parts = []
    for _ in range(3):
        if rng.random() < 0.5:
            parts.append(bx.product(bx.random_nonsignaling_box(M, rng), bx.random_nonsignaling_box(M, rng)))
        else:
            parts.append(crossed_pair_box(rng, M))
    w = rng.dirichlet(np.ones(3))
    return bx.NBox(sum(wi * b.entries for wi, b in zip(w, parts)))


def test_c05_marginal_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(500):
        box = bx.random_nonsignaling_box(2 + k % 3, rng)
        worst = max(worst, max(bx.marginal_identity_residual(box, (a,)) for a in (0, 1)))
    for k in range(50):
        box = random_two_pair_box(rng, 2 + k % 2)
        assert bx.check_nonsignaling(box).passed
        worst = max(worst, max(bx.marginal_identity_residual(box, a) for a in itertools.product((0, 1), repeat=2)))
    assert worst < 1e-10
    assert time.perf_counter() - t0 < 30.0


def test_c06_monogamy():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    for k in range(200):
        box = bx.random_nonsignaling_box(2 + k % 2, rng)
        value, _, _ = max_guessing(box, 0)
        assert value <= bx.bc_value(box) + 1e-7
    value, _, _ = max_guessing(bx.pr_analog(2), 0)
    assert abs(value - 0.5) <= 1e-7
    assert time.perf_counter() - t0 < 120.0


def test_c07_type_lemmas():
    t0 = time.perf_counter()
    for k, n_max in ((2, 8), (3, 5)):
        for N in range(2, n_max + 1):
            for P in stats.grid_distributions(N, k):
                assert stats.mode_is_pv(P, N)
                assert abs(sum(stats.type_distribution(P, N).values()) - 1.0) <= 1e-12
    rng = np.random.default_rng(7)
    for N in range(1, 7):
        types = list(stats.enumerate_types(N, 2))
        for _ in range(5):
            w = dict(zip(types, rng.dirichlet(np.ones(len(types)))))
            law = stats.type_mixture(w, N, 2)
            # a symmetric law is the type-weighted mixture of uniform laws on type classes
            rebuilt = stats.type_mixture(stats.symmetrize(law, 2), N, 2)
            for s in stats.strings(N, 2):
                assert abs(law.get(s, 0.0) - rebuilt.get(s, 0.0)) <= 1e-15
                assert abs(law.get(s, 0.0) - w[stats.freq(s, 2)] / stats.freq(s, 2).class_size()) <= 1e-15
    assert time.perf_counter() - t0 < 60.0


def test_c08_estimation_concentration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    trials = 10**4
    for p, M in ((1.0, 2), (0.9, 3), (1.0, 6)):
        box = epr_box(EprParams(p, M))
        B = expected_bc(p, M)
        for N_e in (400, 10**4):
            est = sample_bc_estimates(box, N_e, trials, rng)
            # i.i.d. pairs: <B_1...B_Nr> = B^Nr, so the event is B > B_est + N_e^(-1/4) for any N_r
            freq = float(np.mean(B > est + N_e**-0.25))
            assert freq < stats.estimation_confidence(1, N_e, M + 0.5, 2)
    assert time.perf_counter() - t0 < 120.0


def test_c09_two_universality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    in_len, draws = 32, 10**5
    pairs = []
    for _ in range(20):
        a = rng.integers(0, 2, in_len, dtype=np.uint8)
        b = a.copy()
        b[rng.choice(in_len, size=int(rng.integers(1, in_len + 1)), replace=False)] ^= 1
        pairs.append((a, b))
    for out_len in (4, 8):
        target = 2.0**-out_len
        sigma = math.sqrt(target * (1 - target) / draws)
        for a, b in pairs:
            rate = collision_count(a, b, out_len, draws, rng) / draws
            assert abs(rate - target) <= 3 * sigma
    assert time.perf_counter() - t0 < 30.0


def test_c10_end_to_end_protocol(tmp_path, capsys):
    t0 = time.perf_counter()
    N, M = 10**5, 6
    agree = 0
    key_lengths = []
    n_e = []
    for seed in range(100):
        out = tmp_path / f"t{seed}.json"
        rc = main(["simulate", "--n", str(N), "--m", str(M), "--purity", "1.0", "--delta", "auto",
                   "--seed", str(seed), "--out", str(out)])
        capsys.readouterr()
        assert rc == 0
        t = json.loads(out.read_text())
        agree += t["K_A"] == t["K_B"]
        key_lengths.append(t["N_s"])
        n_e.append(t["N_e"])
    q = 2 * N**-0.5 / M
    sigma = math.sqrt(N * q * (1 - q))
    assert all(abs(k - 2 * math.sqrt(N) / M) <= 5 * sigma for k in n_e)
    assert agree >= 99
    assert time.perf_counter() - t0 < 300.0
    assert min(key_lengths) > 0, f"N_s over 100 runs: min {min(key_lengths)}, max {max(key_lengths)}"


def test_c11a_length_rule_meets_target_epsilon():
    rng = np.random.default_rng(11)
    worst = -math.inf
    for _ in range(100):
        N_e = int(rng.integers(2000, 10**4 + 1))
        B_est = float(rng.uniform(0.5, 0.7071 - N_e**-0.25 - 0.005))
        N_r = int(rng.integers(10**3, 10**6))
        N_c = int(rng.integers(0, N_r // 20))
        N_s = output_length(N_r, N_c, B_est, N_e)
        if N_s == 0:
            N_c = 0
            N_s = output_length(N_r, N_c, B_est, N_e)
        assert N_s > 0
        # the bound is applied to the N_r hashed systems with <B...B> <= (B_est + N_e^(-1/4))^N_r
        log2_bound = log2_pa_bound(N_r, N_s, N_c, N_r * math.log2(B_est + N_e**-0.25))
        worst = max(worst, log2_bound - (-0.5 * math.sqrt(N_e)))
    assert 2.0**worst <= 1.0 + 1e-12, f"bound exceeds target by a factor {2.0**worst:.6f}"


def _instances():
    """Twenty scripted tripartite no-signaling boxes with N = 1 or 2."""
    rng = np.random.default_rng(111)
    out = []
    boxes = (bx.pr_analog(2), bx.pr_analog(3), epr_box(EprParams(1.0, 2)), epr_box(EprParams(0.9, 3)),
             epr_box(EprParams(0.95, 4)), bx.random_nonsignaling_box(2, rng), bx.random_nonsignaling_box(3, rng))
    for k, box in enumerate(boxes):
        _, witness, _ = max_guessing(box, 0)
        out.append((witness, 1, 0))
        if k < 5:
            out.append((witness, 0, 0))
    # E knows which deterministic strategy was played, mixed with PR-analog noise
    for M in (2, 3):
        comps = [bx.pr_analog(M), bx.random_local_box(M, rng), bx.local_deterministic([0] * M, [0] * (M + 1))]
        out.append((tripartite_from_mixture(comps, [0.6, 0.3, 0.1]), 1, 0))
    pr = bx.pr_analog(2)
    loc = bx.local_deterministic([1, 0], [1, 0, 1])
    for comps, w, n_s in (
        ([bx.product(pr, pr)], [1.0], 2),
        ([bx.product(pr, pr)], [1.0], 1),
        ([bx.product(pr, loc), bx.product(loc, pr)], [0.5, 0.5], 1),
        ([bx.product(pr, pr), bx.product(loc, loc)], [0.8, 0.2], 1),
        ([bx.product(epr_box(EprParams(1.0, 2)), pr)], [1.0], 1),
    ):
        out.append((tripartite_from_mixture(comps, w), n_s, 0))
    # one instance with a disclosed parity bit
    out.append((tripartite_from_mixture([bx.product(pr, pr)], [1.0]), 1, 1))
    return out


def test_c11b_exact_distance_below_bound():
    instances = _instances()
    assert len(instances) == 20
    for tri, n_s, n_c in instances:
        N = tri.N
        f = (lambda a: int(a.sum() % 2)) if n_c else None
        joint = key_table(tri.alice_eve((0,) * N), n_s, f=f, n_c_values=2**n_c)
        distance = key_distance_exact(joint, n_s)
        bound = pa_bound(N, n_s, n_c, bx.bc_product_value(tri.ab_marginal()))
        assert distance <= bound + 1e-9, (N, n_s, n_c, distance, bound)
