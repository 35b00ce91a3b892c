"""Key rates, output length and security-bound calculators."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .quantum import expected_bc, raw_error_rate
from .stats import bc_estimation_failure, bc_estimation_failure_loose

INV_SQRT2 = 1.0 / math.sqrt(2.0)
LENGTH_RULES = ("finite", "asymptotic")


def binary_entropy(w: float) -> float:
    """Shannon entropy of a biased coin, with ``h(0) = h(1) = 0``."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"w={w} outside [0, 1]")
    if w == 0.0 or w == 1.0:
        return 0.0
    return -w * math.log2(w) - (1.0 - w) * math.log2(1.0 - w)


def asymptotic_rate(B: float, w: float) -> float:
    """Secret bits per raw pair, ``2 log2(1/(sqrt2 B)) - h(w)``; may be negative."""
    if B <= 0:
        raise ValueError("B must be positive")
    return 2.0 * math.log2(INV_SQRT2 / B) - binary_entropy(w)


def honest_rate(p: float, M: int) -> float:
    return asymptotic_rate(expected_bc(p, M), raw_error_rate(p))


@dataclass(frozen=True)
class RateRow:
    p: float
    M: int
    B: float
    w: float
    rate_raw: float

    @property
    def rate_clamped(self) -> float:
        return max(0.0, self.rate_raw)


CSV_HEADER = ("p", "M", "B", "w", "rate_raw", "rate_clamped")


def rate_curve(M: int, p_grid: Sequence[float]) -> list[RateRow]:
    rows = []
    for p in p_grid:
        B = expected_bc(p, M)
        w = raw_error_rate(p)
        rows.append(RateRow(float(p), int(M), B, w, asymptotic_rate(B, w)))
    return rows


def rows_to_csv(rows: Sequence[RateRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([f"{r.p:.6f}", r.M, repr(r.B), repr(r.w), repr(r.rate_raw), repr(r.rate_clamped)])
    return buf.getvalue()


def p_grid(text: str) -> list[float]:
    """Parse ``"A:B:STEP"`` into an inclusive grid."""
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError as exc:
        raise ValueError(f"grid must be A:B:STEP, got {text!r}") from exc
    if step <= 0 or hi < lo:
        raise ValueError(f"bad grid {text!r}")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [min(hi, round(lo + k * step, 12)) for k in range(n + 1)]


def p_min(M: int, tol: float = 1e-4) -> float | None:
    """Smallest purity with a positive honest rate, by bisection; None if there is none.

    The rate is increasing in ``p``: ``B`` falls and ``h(w)`` falls as ``p`` grows.
    """
    if honest_rate(1.0, M) <= 0:
        return None
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if honest_rate(mid, M) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def optimal_m(p: float, m_max: int) -> tuple[int, float]:
    """Setting count in ``2..m_max`` with the best honest rate; ties go to the smaller M."""
    if m_max < 2:
        raise ValueError("m_max must be at least 2")
    best_m, best_rate = 2, honest_rate(p, 2)
    for M in range(3, m_max + 1):
        r = honest_rate(p, M)
        if r > best_rate:
            best_m, best_rate = M, r
    return best_m, best_rate


def output_length(
    N_r: int, N_c: int, B_est: float, N_e: int, rule: str = "finite", margin: float | None = None
) -> int:
    """Extractable key length.

    ``"finite"``:
        ``floor(N_r 2 log2((1/sqrt2) / (B_est + N_e^(-1/4))) - N_c - sqrt(N_e))``.
    ``"asymptotic"``:
        ``floor(N_r 2 log2(1 / (sqrt2 B_est)) - N_c)``.

    Both are clamped at 0, and 0 is returned whenever the log term is not positive.
    ``margin`` replaces the ``sqrt(N_e)`` deduction of the finite rule.
    """
    if min(N_r, N_c, N_e) < 0 or B_est < 0:
        raise ValueError("inputs must be non-negative")
    if rule not in LENGTH_RULES:
        raise ValueError(f"unknown rule {rule!r}")
    if N_r == 0:
        return 0
    if rule == "finite":
        if N_e == 0:
            return 0
        denom = B_est + N_e**-0.25
        if denom >= INV_SQRT2:
            return 0
        deduct = math.sqrt(N_e) if margin is None else margin
        value = N_r * 2.0 * math.log2(INV_SQRT2 / denom) - N_c - deduct
    else:
        if B_est <= 0:
            raise ValueError("asymptotic rule needs B_est > 0")
        if B_est >= INV_SQRT2:
            return 0
        value = N_r * 2.0 * math.log2(INV_SQRT2 / B_est) - N_c
    return max(0, math.floor(value))


def log2_pa_bound(N: int, N_s: int, N_c: int, log2_bc_product: float) -> float:
    """``log2`` of the privacy-amplification bound; ``-inf`` for a zero product."""
    return 0.5 * (N + N_s + N_c + 1) + log2_bc_product


def pa_bound(N: int, N_s: int, N_c: int, bc_product: float) -> float:
    """``sqrt2^(N + N_s + N_c + 1) * bc_product``, evaluated through logs."""
    if min(N, N_s, N_c) < 0 or bc_product < 0:
        raise ValueError("inputs must be non-negative")
    if bc_product == 0:
        return 0.0
    e = log2_pa_bound(N, N_s, N_c, math.log2(bc_product))
    return math.inf if e > 1023 else 2.0**e


def security_epsilon(N_e: int) -> float:
    """``sqrt2^(-sqrt(N_e))``."""
    if N_e < 1:
        raise ValueError("N_e must be at least 1")
    return 2.0 ** (-0.5 * math.sqrt(N_e))


def estimation_failure(N: int, N_e: int, M: int) -> float:
    """Probability the estimated product bound fails: ``3 N exp(-sqrt(N_e)/(3M)^2)`` in [0, 1]."""
    return bc_estimation_failure_loose(N, N_e, M)


def estimation_failure_tight(N: int, N_e: int, M: int) -> float:
    """Sharper ``2 (N+1) exp(-sqrt(N_e)/(2M+1)^2)`` clamped to [0, 1]."""
    return min(1.0, bc_estimation_failure(N, N_e, M))


def required_estimation_pairs(N: int, M: int, target: float) -> int:
    """Smallest ``N_e`` with ``estimation_failure(N, N_e, M) <= target``."""
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    root = (3 * M) ** 2 * math.log(3.0 * N / target)
    if root <= 0:
        return 1
    n_e = max(1, math.ceil(root**2))
    # absorb rounding at the boundary
    while n_e > 1 and estimation_failure(N, n_e - 1, M) <= target:
        n_e -= 1
    while estimation_failure(N, n_e, M) > target:
        n_e += 1
    return n_e


@dataclass(frozen=True)
class SecurityReport:
    N_s: int
    epsilon: float
    est_failure: float
    est_failure_tight: float
    rate: float
    N_s_asymptotic: int
    N: int
    N_r: int
    N_e: int
    N_c: int
    B_est: float
    M: int

    def to_dict(self) -> dict:
        return asdict(self)


def security_report(N: int, N_r: int, N_e: int, N_c: int, B_est: float, M: int) -> SecurityReport:
    n_s = output_length(N_r, N_c, B_est, N_e) if N_e else 0
    n_s_asym = output_length(N_r, N_c, B_est, N_e, rule="asymptotic") if B_est > 0 else 0
    return SecurityReport(
        N_s=n_s,
        epsilon=security_epsilon(N_e) if N_e else 1.0,
        est_failure=estimation_failure(N, N_e, M) if N_e else 1.0,
        est_failure_tight=estimation_failure_tight(N, N_e, M) if N_e else 1.0,
        rate=n_s / N if N else 0.0,
        N_s_asymptotic=n_s_asym,
        N=N,
        N_r=N_r,
        N_e=N_e,
        N_c=N_c,
        B_est=B_est,
        M=M,
    )


def key_distance_exact(joint: np.ndarray, n_s: int, tol: float = 1e-9) -> float:
    """Distance of the key from uniform, jointly with the adversary's view.

    Parameters
    ----------
    joint : ndarray, shape (|Z|, 2**n_s, |C|, |E|, |G|)
        ``joint[z, k, c, e, g] = P(k, c, e, g | z)``.
    n_s : int
        Key length in bits.

    Returns
    -------
    float
        ``sum_{k,c,g} max_z sum_e |P(k,c,e,g|z) - 2^-n_s P(c,e,g|z)|``.
    """
    joint = np.asarray(joint, dtype=float)
    if joint.ndim != 5:
        raise ValueError("joint must be indexed (z, k, c, e, g)")
    if joint.shape[1] != 1 << n_s:
        raise ValueError(f"key axis has {joint.shape[1]} values, expected {1 << n_s}")
    if np.any(joint < -tol):
        raise ValueError("negative probabilities")
    totals = joint.reshape(joint.shape[0], -1).sum(axis=1)
    if np.any(np.abs(totals - 1.0) > tol):
        raise ValueError(f"table not normalized per z: {totals}")
    marg = joint.sum(axis=1, keepdims=True)
    dev = np.abs(joint - marg / (1 << n_s)).sum(axis=3)  # (z, k, c, g)
    return float(dev.max(axis=0).sum())


def toeplitz_family(in_len: int, out_len: int) -> list[np.ndarray]:
    """Every Toeplitz matrix of the given shape, as dense 0/1 arrays."""
    n_bits = in_len + out_len - 1
    mats = []
    for seed in itertools.product((0, 1), repeat=n_bits):
        s = np.array(seed, dtype=np.uint8)
        i = np.arange(out_len)[:, None]
        j = np.arange(in_len)[None, :]
        mats.append(s[i - j + in_len - 1])
    return mats


def bits_of(index: int, n: int) -> np.ndarray:
    """Big-endian bit string of ``index``, matching row-major outcome order."""
    return np.array([(index >> (n - 1 - t)) & 1 for t in range(n)], dtype=np.uint8)


def key_table(
    p_ae: np.ndarray,
    n_s: int,
    f: Callable[[np.ndarray], int] | None = None,
    n_c_values: int = 1,
) -> np.ndarray:
    """Joint table of key, syndrome, adversary outcome and hash choice.

    Parameters
    ----------
    p_ae : ndarray, shape (|Z|, 2**N, |E|)
        ``P(A = a, E = e | X = 0, Z = z)`` with ``a`` in row-major bit order.
    n_s : int
        Output length of the uniformly chosen Toeplitz hash.
    f : callable, optional
        Public function of Alice's string, returning an index below ``n_c_values``.

    Returns
    -------
    ndarray, shape (|Z|, 2**n_s, n_c_values, |E|, |G|)
    """
    p_ae = np.asarray(p_ae, dtype=float)
    n_z, n_a, n_e = p_ae.shape
    N = int(round(math.log2(n_a)))
    if 1 << N != n_a:
        raise ValueError("Alice axis must have 2**N entries")
    family = toeplitz_family(N, n_s) if n_s else [np.zeros((0, N), dtype=np.uint8)]
    weights = 1.0 / len(family)
    joint = np.zeros((n_z, 1 << n_s, n_c_values, n_e, len(family)))
    for a_idx in range(n_a):
        a = bits_of(a_idx, N)
        c = 0 if f is None else int(f(a))
        for g, T in enumerate(family):
            k_bits = (T.astype(np.int64) @ a) % 2
            k = int(sum(int(b) << (n_s - 1 - t) for t, b in enumerate(k_bits)))
            joint[:, k, c, :, g] += weights * p_ae[:, a_idx, :]
    return joint
