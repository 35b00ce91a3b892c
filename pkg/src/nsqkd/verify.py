"""Named verification suites over the library, for the command line.

Each suite draws from its own seeded stream and returns a :class:`SuiteResult`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import boxcore as bx
from . import stats
from .hashing import collision_count
from .lpverify import beta_monotonicity_check, max_guessing
from .protocol import sample_bc_estimates
from .quantum import EprParams, epr_box, expected_bc


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "checks": self.checks, "detail": self.detail}


def suite_types(rng: np.random.Generator) -> SuiteResult:
    """Mode of the type law, normalization and the bound on the number of types."""
    checks = 0
    ok = True
    worst_norm = 0.0
    for alphabet, n_max in ((2, 8), (3, 5)):
        for N in range(2, n_max + 1):
            if stats.type_count(N, alphabet) > stats.type_count_bound(N, alphabet):
                ok = False
            for P in stats.grid_distributions(N, alphabet):
                ok &= stats.mode_is_pv(P, N)
                worst_norm = max(worst_norm, abs(sum(stats.type_distribution(P, N).values()) - 1.0))
                checks += 1
    ok &= worst_norm <= 1e-12
    return SuiteResult("types", bool(ok), checks, {"worst_normalization_error": worst_norm})


def suite_symmetric_events(rng: np.random.Generator, n_max: int = 6) -> SuiteResult:
    """Events that are unlikely under every i.i.d. law stay unlikely under any symmetric law.

    A symmetric event is a union of type classes, and a symmetric law is a
    mixture of type-uniform laws, so the worst case is the uniform law on one
    type class of the event.
    """
    checks = 0
    ok = True
    worst_ratio = 0.0
    for N in range(1, n_max + 1):
        types = list(stats.enumerate_types(N, 2))
        grid = list(stats.grid_distributions(N, 2))
        table = np.array([[stats.type_probability(P, q) for q in types] for P in grid])
        for mask in itertools.product((0, 1), repeat=len(types)):
            sel = np.asarray(mask, dtype=bool)
            if not sel.any():
                continue
            eps = float(table[:, sel].sum(axis=1).max())
            bound = stats.symmetric_event_bound(min(1.0, eps), N, 2)
            # worst symmetric law puts all its mass on one type class inside the event
            ok &= bound >= 1.0 - 1e-12
            worst_ratio = max(worst_ratio, 1.0 / bound)
            checks += 1
    return SuiteResult("symmetric-events", bool(ok), checks, {"max_prob_over_bound": worst_ratio})


def suite_decomposition(rng: np.random.Generator, n_max: int = 6) -> SuiteResult:
    """Symmetric string laws equal the mixture of type-uniform laws under their type law."""
    checks = 0
    worst = 0.0
    for N in range(1, n_max + 1):
        for _ in range(5):
            # random symmetric law: random weights per type, spread uniformly within each class
            types = list(stats.enumerate_types(N, 2))
            w = rng.dirichlet(np.ones(len(types)))
            law = stats.type_mixture(dict(zip(types, w)), N, 2)
            rebuilt = stats.type_mixture(stats.symmetrize(law, 2), N, 2)
            worst = max(worst, max(abs(law.get(s, 0.0) - rebuilt.get(s, 0.0)) for s in stats.strings(N, 2)))
            checks += 1
    return SuiteResult("decomposition", worst <= 1e-12, checks, {"max_abs_error": worst})


def suite_estimation(rng: np.random.Generator, trials: int = 2000) -> SuiteResult:
    """Empirical failure rate of the estimated product bound against the type-count bound."""
    checks = 0
    ok = True
    detail = {}
    for p, M, N_e in ((1.0, 2, 400), (0.9, 3, 400), (1.0, 6, 2500)):
        box = epr_box(EprParams(p, M))
        B = expected_bc(p, M)
        est = sample_bc_estimates(box, N_e, trials, rng)
        fail = float(np.mean(B > est + N_e**-0.25))
        bound = stats.estimation_confidence(N_e, N_e, M + 0.5, 2)
        ok &= fail <= bound
        detail[f"p={p},M={M},N_e={N_e}"] = {"empirical": fail, "bound": bound}
        checks += 1
    return SuiteResult("estimation", bool(ok), checks, detail)


def suite_marginal_identity(rng: np.random.Generator, n_single: int = 100, n_pair: int = 10) -> SuiteResult:
    worst = 0.0
    checks = 0
    for k in range(n_single):
        box = bx.random_nonsignaling_box(2 + k % 3, rng)
        for a in (0, 1):
            worst = max(worst, bx.marginal_identity_residual(box, (a,)))
            checks += 1
    for k in range(n_pair):
        M = 2 + k % 2
        box = bx.product(bx.random_nonsignaling_box(M, rng), bx.random_nonsignaling_box(M, rng))
        for a in itertools.product((0, 1), repeat=2):
            worst = max(worst, bx.marginal_identity_residual(box, a))
            checks += 1
    return SuiteResult("marginal-identity", worst < 1e-10, checks, {"max_residual": worst})


def suite_monogamy(rng: np.random.Generator, n_boxes: int = 40) -> SuiteResult:
    worst_slack = math.inf
    checks = 0
    for k in range(n_boxes):
        box = bx.random_nonsignaling_box(2 + k % 2, rng)
        value, _, _ = max_guessing(box, 0)
        worst_slack = min(worst_slack, bx.bc_value(box) - value)
        checks += 1
    pr_value, _, _ = max_guessing(bx.pr_analog(2), 0)
    ok = worst_slack >= -1e-7 and abs(pr_value - 0.5) <= 1e-7
    return SuiteResult("monogamy", bool(ok), checks + 1, {"min_slack": worst_slack, "pr_analog_value": pr_value})


def suite_beta_order(rng: np.random.Generator) -> SuiteResult:
    worst = -math.inf
    checks = 0
    for M in (2, 3, 4):
        for n in (1, 2, 3):
            worst = max(worst, beta_monotonicity_check(M, n))
            checks += 1
    return SuiteResult("beta-order", worst <= 1e-14, checks, {"max_violation": worst})


def suite_two_universal(rng: np.random.Generator, draws: int = 100_000, n_pairs: int = 20) -> SuiteResult:
    detail = {}
    ok = True
    checks = 0
    in_len = 32
    for out_len in (4, 8):
        target = 2.0**-out_len
        sigma = math.sqrt(target * (1 - target) / draws)
        for _ in range(n_pairs):
            a = rng.integers(0, 2, in_len, dtype=np.uint8)
            b = a.copy()
            flip = rng.choice(in_len, size=int(rng.integers(1, in_len + 1)), replace=False)
            b[flip] ^= 1
            rate = collision_count(a, b, out_len, draws, rng) / draws
            ok &= abs(rate - target) <= 3 * sigma
            checks += 1
        detail[f"out_len={out_len}"] = {"target": target, "last_rate": rate}
    return SuiteResult("two-universal", bool(ok), checks, detail)


SUITES: dict[str, Callable[[np.random.Generator], SuiteResult]] = {
    "types": suite_types,
    "symmetric-events": suite_symmetric_events,
    "decomposition": suite_decomposition,
    "estimation": suite_estimation,
    "marginal-identity": suite_marginal_identity,
    "monogamy": suite_monogamy,
    "beta-order": suite_beta_order,
    "two-universal": suite_two_universal,
}


def run_suites(names: list[str], seed: int) -> list[SuiteResult]:
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)}")
    seqs = np.random.SeedSequence(seed).spawn(len(SUITES))
    streams = dict(zip(SUITES, seqs))
    return [SUITES[n](np.random.default_rng(streams[n])) for n in names]
