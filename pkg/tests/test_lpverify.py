import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from nsqkd import boxcore as bx
from nsqkd.lpverify import (
    TripartiteBox,
    beta_monotonicity_check,
    build_guessing_lp,
    max_guessing,
    monogamy_slack,
    tripartite_from_mixture,
)
from nsqkd.quantum import EprParams, epr_box


def highs_value(box, x):
    problem, _ = build_guessing_lp(box, x)
    res = linprog(-problem.objective, A_eq=problem.A_eq, b_eq=problem.b_eq, bounds=(0, None), method="highs")
    assert res.status == 0
    return -res.fun


def test_pr_analog_squeeze():
    value, witness, res = max_guessing(bx.pr_analog(2), 0)
    assert value == pytest.approx(0.5, abs=1e-7)
    assert res.ok


@pytest.mark.parametrize("M", [2, 3])
def test_three_routes_agree(M):
    rng = np.random.default_rng(M)
    for _ in range(4):
        box = bx.random_nonsignaling_box(M, rng)
        direct, _, _ = max_guessing(box, 0, method="direct")
        reduced, _, _ = max_guessing(box, 0, method="reduced")
        assert direct == pytest.approx(reduced, abs=1e-7)
        assert direct == pytest.approx(highs_value(box, (0,)), abs=1e-7)


def test_epr_boxes_against_highs_and_bc():
    for p, M in ((1.0, 2), (0.9, 2), (0.9, 3), (0.6, 4)):
        box = epr_box(EprParams(p, M))
        value, _, _ = max_guessing(box, 0)
        assert value == pytest.approx(highs_value(box, (0,)), abs=1e-7)
        assert value <= bx.bc_value(box) + 1e-7


def test_monogamy_on_random_boxes():
    rng = np.random.default_rng(11)
    for k in range(20):
        box = bx.random_nonsignaling_box(2 + k % 2, rng)
        s = monogamy_slack(box, int(rng.integers(0, box.M)))
        assert s["slack"] >= -1e-7


def test_local_deterministic_box_is_fully_guessable():
    value, _, _ = max_guessing(bx.local_deterministic([1, 0, 1], [0, 0, 1, 1]), 2)
    assert value == pytest.approx(1.0, abs=1e-9)


def test_witness_properties():
    box = bx.random_nonsignaling_box(3, np.random.default_rng(12))
    value, witness, _ = max_guessing(box, 1)
    assert witness.ab_marginal().allclose(box, atol=1e-8)
    assert witness.nonsignaling_residual() < 1e-8
    # E's outcome e guesses a: P(a = e | x = 1)
    P = witness.entries[..., 0]
    guess = sum(P[a, :, a, 1, 0].sum() for a in (0, 1))
    assert guess == pytest.approx(value, abs=1e-8)


def test_reduced_witness_properties():
    box = bx.random_nonsignaling_box(2, np.random.default_rng(13))
    value, witness, _ = max_guessing(box, 0, method="reduced")
    assert witness.ab_marginal().allclose(box, atol=1e-7)
    assert witness.nonsignaling_residual() < 1e-7


@pytest.mark.parametrize("m", [1, 2])
def test_relabel_covariance(m):
    M = 3
    box = bx.random_nonsignaling_box(M, np.random.default_rng(14))
    for x in range(M):
        v, _, _ = max_guessing(box, x)
        w, _, _ = max_guessing(bx.relabel(box, m), (x + m) % M)
        assert v == pytest.approx(w, abs=1e-7)


def test_dropping_key_setting_is_a_relaxation():
    rng = np.random.default_rng(15)
    for _ in range(5):
        box = bx.random_nonsignaling_box(2, rng)
        full, _, _ = max_guessing(box, 0, include_key_setting=True)
        block, _, _ = max_guessing(box, 0, include_key_setting=False)
        assert block >= full - 1e-8


def test_rejects_signaling_and_oversize():
    P = np.zeros((2, 2, 2, 2))
    P[0, 0, :, 0] = 1.0
    P[1, 0, :, 1] = 1.0
    with pytest.raises(bx.PreconditionError):
        max_guessing(bx.ConditionalBox(P), 0)
    with pytest.raises(ValueError):
        max_guessing(bx.pr_analog(5), 0)
    with pytest.raises(ValueError):
        max_guessing(bx.pr_analog(2), 2)
    with pytest.raises(ValueError):
        max_guessing(bx.pr_analog(2), 0, method="magic")


def test_beta_monotonicity_examples():
    assert beta_monotonicity_check(2, 2) <= 1e-14
    assert beta_monotonicity_check(3, 3) <= 1e-14


def test_mixture_extension():
    rng = np.random.default_rng(16)
    boxes = [bx.random_local_box(2, rng), bx.pr_analog(2)]
    tri = tripartite_from_mixture(boxes, [0.3, 0.7])
    assert tri.ab_marginal().allclose(bx.mix(boxes[0], boxes[1], 0.3), atol=1e-14)
    assert tri.nonsignaling_residual() < 1e-14
    assert tri.eve_outcomes == 2
    with pytest.raises(ValueError):
        tripartite_from_mixture(boxes, [0.5, 0.6])


def test_alice_eve_table():
    tri = tripartite_from_mixture([bx.local_deterministic([1, 1], [0, 0, 0])], [1.0])
    tab = tri.alice_eve((0,))
    assert tab.shape == (1, 2, 1)
    assert tab[0, 1, 0] == pytest.approx(1.0)


def test_tripartite_rejects_negative():
    with pytest.raises(ValueError):
        TripartiteBox(-np.ones((2, 2, 1, 2, 2, 1)), 1)


@pytest.mark.slow
def test_two_pair_pr_product():
    pr = bx.pr_analog(2)
    value, witness, _ = max_guessing(bx.product(pr, pr), (0, 0))
    assert value == pytest.approx(0.25, abs=1e-7)
    assert witness.nonsignaling_residual() < 1e-7


@pytest.mark.slow
def test_two_pair_random_product_bounds():
    rng = np.random.default_rng(17)
    b1 = bx.random_nonsignaling_box(2, rng)
    b2 = bx.random_nonsignaling_box(2, rng)
    v1, _, _ = max_guessing(b1, 0, include_key_setting=False)
    v2, _, _ = max_guessing(b2, 0, include_key_setting=False)
    v, witness, _ = max_guessing(bx.product(b1, b2), (0, 0))
    # a product attack is available, and monogamy caps the rest
    assert v >= v1 * v2 - 1e-7
    assert v <= bx.bc_value(b1) * bx.bc_value(b2) + 1e-7
    assert witness.ab_marginal().allclose(bx.NBox(bx.product(b1, b2).block), atol=1e-7)
