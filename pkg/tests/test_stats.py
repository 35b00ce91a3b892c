import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsqkd import stats
from nsqkd.boxcore import PreconditionError

from _oracles import type_law_by_enumeration, types_by_enumeration


def test_freq_examples():
    assert stats.freq((0, 0, 1, 1)).q.tolist() == [0.5, 0.5]
    assert stats.freq((2, 2, 2), 3).counts == (0, 0, 3)
    with pytest.raises(ValueError):
        stats.freq(())
    with pytest.raises(ValueError):
        stats.freq((0, 3), 2)


def test_class_sizes_n4():
    sizes = types_by_enumeration(4, 2)
    assert sorted(sizes.values()) == [1, 1, 4, 4, 6]
    for c, n in sizes.items():
        assert stats.Frequency(c).class_size() == n


@pytest.mark.parametrize("N,k", [(1, 1), (4, 2), (2, 3), (5, 3), (3, 4)])
def test_enumerate_types_matches_brute_force(N, k):
    got = {q.counts for q in stats.enumerate_types(N, k)}
    assert got == set(types_by_enumeration(N, k))
    assert len(got) == stats.type_count(N, k) <= stats.type_count_bound(N, k)


def test_type_count_bound_examples():
    assert stats.type_count_bound(4, 2) == 5 and stats.type_count(4, 2) == 5
    assert stats.type_count_bound(2, 3) == 9 and stats.type_count(2, 3) == 6
    assert stats.type_count_bound(7, 1) == 1


def test_type_distribution_example():
    d = stats.type_distribution((0.5, 0.5), 2)
    assert {q.counts: v for q, v in d.items()} == pytest.approx({(2, 0): 0.25, (1, 1): 0.5, (0, 2): 0.25})


def test_type_distribution_point_mass():
    d = stats.type_distribution((0.0, 1.0, 0.0), 4)
    assert d[stats.Frequency((0, 4, 0))] == 1.0
    assert sum(d.values()) == 1.0


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=3), st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_type_distribution_matches_enumeration(w, N):
    P = np.asarray(w) / sum(w)
    ours = {q.counts: v for q, v in stats.type_distribution(P, N).items()}
    ref = type_law_by_enumeration(P, N)
    assert set(ours) == set(ref)
    for c in ref:
        assert ours[c] == pytest.approx(ref[c], rel=1e-10, abs=1e-15)
    assert sum(ours.values()) == pytest.approx(1.0, abs=1e-12)


def test_mode_uniform_binary():
    d = stats.type_distribution((0.5, 0.5), 2)
    assert stats.mode_is_pv((0.5, 0.5), 2)
    assert max(d.values()) == d[stats.Frequency((1, 1))] == 0.5


@pytest.mark.parametrize("k,n_max", [(2, 8), (3, 5)])
def test_mode_property_exhaustive(k, n_max):
    for N in range(2, n_max + 1):
        for P in stats.grid_distributions(N, k):
            assert stats.mode_is_pv(P, N)


def test_mode_requires_grid():
    with pytest.raises(PreconditionError):
        stats.mode_is_pv((0.3, 0.7), 4)


def test_bernstein_tail():
    assert stats.bernstein_tail(10, 1e-9) == pytest.approx(2.0)
    assert stats.bernstein_tail(10, 4.0) == pytest.approx(2 * math.exp(-4), rel=1e-12)
    assert stats.bernstein_tail(10, 4.0) == pytest.approx(0.0366, abs=1e-4)


def test_bernstein_tail_dominates_empirical():
    rng = np.random.default_rng(0)
    N, trials = 200, 20000
    V = rng.choice([0.5, 2.5], size=(trials, N), p=[0.7, 0.3])
    mean = 0.7 * 0.5 + 0.3 * 2.5
    second = 0.7 * 0.25 + 0.3 * 6.25
    for omega in (1.0, 2.0, 3.0):
        freq_ = np.mean(np.abs(V.sum(axis=1) - N * mean) > omega * math.sqrt(N * second))
        assert freq_ <= stats.bernstein_tail(N, omega)


def test_symmetric_event_bound_examples():
    assert stats.symmetric_event_bound(0.0, 50, 2) == 0.0
    # eps (N+1)^(|V|-1) at eps = 1e-3, N = 100
    assert stats.symmetric_event_bound(1e-3, 100, 2) == pytest.approx(0.101, abs=1e-12)


def test_symmetric_event_bound_brute_force():
    # any symmetric law is a mixture of type-uniform laws; check random mixtures and the extreme ones
    rng = np.random.default_rng(1)
    fine = np.linspace(0, 1, 201)
    for N in range(1, 6):
        types = list(stats.enumerate_types(N, 2))
        laws = [np.eye(len(types))[i] for i in range(len(types))] + list(rng.dirichlet(np.ones(len(types)), 20))
        for mask in itertools.product((0, 1), repeat=len(types)):
            sel = np.asarray(mask, dtype=bool)
            if not sel.any():
                continue
            eps = max(sum(stats.type_probability((1 - t, t), q) for q, m in zip(types, mask) if m) for t in fine)
            bound = stats.symmetric_event_bound(min(1.0, eps), N, 2)
            for w in laws:
                assert w[sel].sum() <= bound + 1e-12


def test_estimation_confidence_example():
    M = 6
    b = stats.estimation_confidence(10**4, 10**4, M + 0.5, 2)
    assert b == pytest.approx(2 * (2 * 10**4 + 1) * math.exp(-100 / 169), rel=1e-12)
    assert stats.estimation_confidence(10, 10**12, 2.0, 2) < 1e-100


def test_bc_failure_forms_agree():
    for N, Ne, M in ((10**6, 10**5, 3), (10**8, 10**6, 6)):
        assert stats.bc_estimation_failure(N, Ne, M) == pytest.approx(
            2 * (N + 1) * math.exp(-math.sqrt(Ne) / (4 * (M + 0.5) ** 2)), rel=1e-12
        )
        assert stats.bc_estimation_failure(N, Ne, M) <= 3 * N * math.exp(-math.sqrt(Ne) / (3 * M) ** 2) + 1e-300


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_decomposition_round_trip(N, seed):
    rng = np.random.default_rng(seed)
    types = list(stats.enumerate_types(N, 2))
    w = dict(zip(types, rng.dirichlet(np.ones(len(types)))))
    law = stats.type_mixture(w, N, 2)
    assert stats.is_symmetric(law)
    back = stats.symmetrize(law, 2)
    for q in types:
        assert back.get(q, 0.0) == pytest.approx(w[q], abs=1e-12)
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)


def test_symmetrize_of_iid_is_type_law():
    P = (0.2, 0.8)
    N = 5
    law = {s: math.prod(P[v] for v in s) for s in stats.strings(N, 2)}
    sym = stats.symmetrize(law, 2)
    td = stats.type_distribution(P, N)
    for q in td:
        assert sym[q] == pytest.approx(td[q], abs=1e-14)


def test_non_symmetric_detected():
    assert not stats.is_symmetric({(0, 1): 0.7, (1, 0): 0.3})


def test_enumeration_cap():
    with pytest.raises(ValueError):
        stats.type_distribution(np.ones(6) / 6, 200)


def test_estimation_failure_below_iid_bound():
    # without the type-count factor the bound is informative at N_e = 10^4, M = 2
    from nsqkd.protocol import sample_bc_estimates
    from nsqkd.quantum import EprParams, epr_box, expected_bc

    N_e, trials = 10**4, 10**4
    est = sample_bc_estimates(epr_box(EprParams(1.0, 2)), N_e, trials, np.random.default_rng(21))
    freq_ = np.mean(expected_bc(1.0, 2) > est + N_e**-0.25)
    bound = stats.iid_estimation_confidence(N_e, 2.5)
    assert bound < 0.04
    assert freq_ <= bound
