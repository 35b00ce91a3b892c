"""One-way syndrome error correction for the raw key.

Alice publishes ``C = H A`` (one syndrome per frame or block). Bob decodes
the error pattern ``e`` with ``H e = C + H B`` and outputs ``B + e``.

Two schemes are provided:

``"ldpc"`` (default)
    Sparse random parity checks of column weight 3 over frames of up to
    ``frame_len`` bits, decoded by sum-product belief propagation.
``"block-ml"``
    Dense random parity checks over blocks of ``block_len`` bits with exact
    maximum-likelihood (minimum-weight coset leader) decoding.

Whenever ``h(w) + margin >= 1`` a frame is published in the clear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import kernels
from .security import binary_entropy

SCHEMES = ("ldpc", "block-ml")
COLUMN_WEIGHT = 3
# decoder priors never use a flip rate below this
W_FLOOR = 1e-3


@dataclass(frozen=True)
class EcConfig:
    """Error-correction settings.

    Attributes
    ----------
    scheme : {"ldpc", "block-ml"}
    margin : float
        Syndrome bits per raw bit above ``h(w)``.
    seed : int
        Seeds the public parity-check matrices.
    block_len : int
        Block length of the ``block-ml`` scheme (at most 20).
    frame_len : int
        Maximum frame length of the ``ldpc`` scheme.
    sample_fraction : float
        Fraction of raw-key pairs disclosed to estimate ``w``.
    max_iter : int
        Belief-propagation iteration cap.
    ml_radius : int or None
        ``block-ml`` flags blocks whose coset leader is heavier than this.
    """

    scheme: str = "ldpc"
    margin: float = 0.15
    seed: int = 0
    block_len: int = 16
    frame_len: int = 4096
    sample_fraction: float = 0.05
    max_iter: int = 60
    ml_radius: int | None = None

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if not 1 <= self.block_len <= 20:
            raise ValueError("block_len must lie in 1..20")
        if self.frame_len < 8:
            raise ValueError("frame_len must be at least 8")
        if not 0.0 <= self.sample_fraction < 1.0:
            raise ValueError("sample_fraction must lie in [0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    def with_(self, **kw) -> "EcConfig":
        return replace(self, **kw)


def syndrome_length(n: int, w: float, margin: float) -> int:
    """``ceil(n (h(w) + margin))`` capped at ``n``."""
    if n <= 0:
        return 0
    # guard against 0.3864 * 1e4 = 3864.0000000000005 style round-up
    target = n * (binary_entropy(w) + margin)
    return min(n, math.ceil(target - 1e-9))


def _segments(n: int, max_len: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into near-equal consecutive pieces of at most ``max_len``."""
    if n == 0:
        return []
    k = -(-n // max_len)
    edges = np.linspace(0, n, k + 1).round().astype(int)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(k)]


@dataclass(frozen=True, eq=False)
class SparseParity:
    """GF(2) parity-check matrix in CSR form; ``n_rows == n_vars`` means identity."""

    n_rows: int
    n_vars: int
    row_ptr: np.ndarray
    col_idx: np.ndarray

    @property
    def trivial(self) -> bool:
        return self.n_rows >= self.n_vars

    def syndrome(self, x: np.ndarray) -> np.ndarray:
        if self.trivial:
            return np.asarray(x, dtype=np.uint8).copy()
        return kernels.csr_syndrome(self.row_ptr, self.col_idx, x)

    def dense(self) -> np.ndarray:
        H = np.zeros((self.n_rows, self.n_vars), dtype=np.uint8)
        if self.trivial:
            H[np.arange(self.n_vars), np.arange(self.n_vars)] = 1
            return H
        for r in range(self.n_rows):
            H[r, self.col_idx[self.row_ptr[r] : self.row_ptr[r + 1]]] ^= 1
        return H


def random_sparse_parity(n_rows: int, n_vars: int, rng: np.random.Generator) -> SparseParity:
    """Column weight ``min(3, n_rows)`` with row degrees as even as possible."""
    if n_rows >= n_vars:
        return SparseParity(n_vars, n_vars, np.arange(n_vars + 1), np.arange(n_vars))
    if n_rows == 0:
        return SparseParity(0, n_vars, np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64))
    cw = min(COLUMN_WEIGHT, n_rows)
    sockets = rng.permutation(np.arange(cw * n_vars) % n_rows).reshape(n_vars, cw)
    # repair columns that hit the same row twice by swapping with random sockets
    for _ in range(1000):
        srt = np.sort(sockets, axis=1)
        bad = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
        if bad.size == 0:
            break
        for col in bad:
            k = int(rng.integers(cw))
            other = int(rng.integers(n_vars))
            ko = int(rng.integers(cw))
            sockets[col, k], sockets[other, ko] = sockets[other, ko], sockets[col, k]
    else:
        raise RuntimeError("could not build a parity-check matrix without repeated rows")
    rows = sockets.ravel()
    cols = np.repeat(np.arange(n_vars), cw)
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=row_ptr[1:])
    return SparseParity(n_rows, n_vars, row_ptr, cols.astype(np.int64))


@dataclass(frozen=True, eq=False)
class CosetTable:
    """Exhaustive ML decoder for one dense ``r x L`` parity matrix."""

    L: int
    r: int
    columns: np.ndarray  # column j of H as an r-bit integer
    leader: np.ndarray  # syndrome -> minimum-weight error pattern, -1 if unreachable
    leader_weight: np.ndarray

    def syndrome(self, x: np.ndarray) -> np.ndarray:
        """Syndromes of a (n_blocks, L) bit array as integers."""
        x = np.asarray(x, dtype=np.int64)
        return np.bitwise_xor.reduce(x * self.columns[None, :], axis=1)


@lru_cache(maxsize=64)
def _coset_table(L: int, r: int, seed: int) -> CosetTable:
    rng = np.random.default_rng([seed, L, r, 0x51])
    if r >= L:
        columns = 1 << np.arange(L, dtype=np.int64)
    elif r == 0:
        columns = np.zeros(L, dtype=np.int64)
    elif (1 << r) - 1 >= L:
        # distinct nonzero columns correct every single flip; among a few draws
        # keep the one whose pairwise sums cover the most remaining syndromes
        best, best_cover = None, -1
        for _ in range(64):
            cand = rng.choice(np.arange(1, 1 << r, dtype=np.int64), L, replace=False)
            pairs = (cand[:, None] ^ cand[None, :])[np.triu_indices(L, 1)]
            cover = np.setdiff1d(pairs, np.concatenate(([0], cand))).size
            if cover > best_cover:
                best, best_cover = cand, cover
        columns = best
    else:
        columns = rng.integers(1, 1 << r, L, dtype=np.int64)
    patterns = np.arange(1 << L, dtype=np.int64)
    syn = np.zeros(1 << L, dtype=np.int64)
    for j in range(L):
        syn ^= ((patterns >> j) & 1) * columns[j]
    weight = np.bitwise_count(patterns.astype(np.uint64)).astype(np.int64)
    # sort by syndrome then weight; the first pattern of each syndrome is its leader
    order = np.lexsort((patterns, weight, syn))
    s_sorted = syn[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = s_sorted[1:] != s_sorted[:-1]
    size = 1 << max(r, 0) if r < L else 1 << L
    leader = np.full(size, -1, dtype=np.int64)
    leader_weight = np.full(size, L + 1, dtype=np.int64)
    leader[s_sorted[first]] = patterns[order[first]]
    leader_weight[s_sorted[first]] = weight[order[first]]
    return CosetTable(L, r, columns, leader, leader_weight)


def coset_table(L: int, r: int, seed: int) -> CosetTable:
    return _coset_table(int(L), int(r), int(seed))


@dataclass(frozen=True, eq=False)
class ReconciliationCode:
    """Public code for one raw key of length ``n`` at announced flip rate ``w``."""

    n: int
    w: float
    config: EcConfig
    segments: list[tuple[int, int]] = field(repr=False)
    parts: list = field(repr=False)  # SparseParity or CosetTable per segment

    @property
    def syndrome_bits(self) -> int:
        total = 0
        for part in self.parts:
            total += part.n_rows if isinstance(part, SparseParity) else part.r
        return total

    def encode(self, a) -> np.ndarray:
        a = _bits(a, self.n)
        out = []
        for (lo, hi), part in zip(self.segments, self.parts):
            if isinstance(part, SparseParity):
                out.append(part.syndrome(a[lo:hi]))
            else:
                s = int(part.syndrome(a[lo:hi][None, :])[0])
                out.append(_int_to_bits(s, part.r))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.uint8)

    def decode(self, b, C) -> tuple[np.ndarray, list[int]]:
        """Bob's estimate of Alice's string and the indices of failed segments."""
        b = _bits(b, self.n)
        C = np.asarray(C, dtype=np.uint8).ravel()
        if C.size != self.syndrome_bits:
            raise ValueError(f"syndrome has {C.size} bits, code expects {self.syndrome_bits}")
        out = b.copy()
        failed: list[int] = []
        pos = 0
        w_dec = min(max(self.w, W_FLOOR), 0.5 - 1e-9)
        llr = math.log((1.0 - w_dec) / w_dec)
        for k, ((lo, hi), part) in enumerate(zip(self.segments, self.parts)):
            if isinstance(part, SparseParity):
                r = part.n_rows
                target = C[pos : pos + r] ^ part.syndrome(b[lo:hi])
                if part.trivial:
                    out[lo:hi] = C[pos : pos + r]
                else:
                    prior = np.full(hi - lo, llr)
                    e, ok, _ = kernels.bp_decode(
                        part.row_ptr, part.col_idx, hi - lo, target, prior, self.config.max_iter
                    )
                    if ok:
                        out[lo:hi] ^= e
                    else:
                        failed.append(k)
            else:
                r = part.r
                target = _bits_to_int(C[pos : pos + r]) ^ int(part.syndrome(b[lo:hi][None, :])[0])
                lead = int(part.leader[target])
                radius = self.config.ml_radius
                if lead < 0 or (radius is not None and part.leader_weight[target] > radius):
                    failed.append(k)
                else:
                    out[lo:hi] ^= _int_to_bits(lead, hi - lo)
            pos += r
        return out, failed


def build_code(n: int, w: float, config: EcConfig) -> ReconciliationCode:
    """Deterministic public code from ``(n, w, config)``; both parties build the same one."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if not 0.0 <= w <= 1.0:
        raise ValueError("w must lie in [0, 1]")
    seg_len = config.frame_len if config.scheme == "ldpc" else config.block_len
    segments = _segments(n, seg_len)
    parts: list = []
    for k, (lo, hi) in enumerate(segments):
        L = hi - lo
        r = syndrome_length(L, w, config.margin)
        if config.scheme == "ldpc":
            rng = np.random.default_rng([config.seed, L, r, 0x1D9C])
            parts.append(random_sparse_parity(r, L, rng))
        else:
            parts.append(coset_table(L, r, config.seed))
    return ReconciliationCode(n, float(w), config, segments, parts)


def error_correct_encode(a_r, config: EcConfig, w: float) -> np.ndarray:
    a_r = np.asarray(a_r, dtype=np.uint8).ravel()
    return build_code(a_r.size, w, config).encode(a_r)


def error_correct_decode(b_r, C, config: EcConfig, w: float) -> tuple[np.ndarray, list[int]]:
    b_r = np.asarray(b_r, dtype=np.uint8).ravel()
    return build_code(b_r.size, w, config).decode(b_r, C)


def block_ml_success_bound(L: int, r: int, w: float) -> float:
    """Upper bound on the per-block success of any ``r``-bit syndrome ML decoder.

    At most ``2^r`` error patterns are corrected (one per coset), so success is
    at most the probability mass of the ``2^r`` most likely patterns, which are
    the lightest ones when ``w < 1/2``.
    """
    budget = 1 << r
    total = 0.0
    for k in range(L + 1):
        take = min(budget, math.comb(L, k))
        total += take * w**k * (1.0 - w) ** (L - k)
        budget -= take
        if budget == 0:
            break
    return total


def _bits(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint8).ravel()
    if x.size != n:
        raise ValueError(f"expected {n} bits, got {x.size}")
    return x


def _int_to_bits(v: int, r: int) -> np.ndarray:
    return np.array([(v >> j) & 1 for j in range(r)], dtype=np.uint8)



def _bits_to_int(bits) -> int:
    return int(sum(int(b) << j for j, b in enumerate(bits)))
