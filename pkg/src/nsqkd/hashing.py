"""Toeplitz two-universal hashing over GF(2)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True, eq=False)
class TwoUniversalHash:
    """Toeplitz matrix ``T[i, j] = toeplitz_bits[i - j + in_len - 1]``.

    Attributes
    ----------
    in_len, out_len : int
    toeplitz_bits : ndarray of uint8, length ``in_len + out_len - 1``
    """

    in_len: int
    out_len: int
    toeplitz_bits: np.ndarray

    def __post_init__(self) -> None:
        if self.in_len < 0 or self.out_len < 0:
            raise ValueError("lengths must be non-negative")
        if self.out_len > self.in_len:
            raise ValueError(f"out_len={self.out_len} exceeds in_len={self.in_len}")
        bits = np.asarray(self.toeplitz_bits, dtype=np.uint8).ravel()
        expected = self.in_len + self.out_len - 1 if self.out_len and self.in_len else 0
        if bits.size != expected:
            raise ValueError(f"need {expected} seed bits, got {bits.size}")
        if np.any(bits > 1):
            raise ValueError("seed bits must be 0/1")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "toeplitz_bits", bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TwoUniversalHash):
            return NotImplemented
        return (
            self.in_len == other.in_len
            and self.out_len == other.out_len
            and np.array_equal(self.toeplitz_bits, other.toeplitz_bits)
        )

    def __call__(self, a) -> np.ndarray:
        return apply_hash(self, a)

    def matrix(self) -> np.ndarray:
        return toeplitz_matrix(self.toeplitz_bits, self.in_len, self.out_len)

    def to_hex(self) -> str:
        return bits_to_hex(self.toeplitz_bits)

    @classmethod
    def from_hex(cls, in_len: int, out_len: int, hex_bits: str) -> "TwoUniversalHash":
        n_bits = in_len + out_len - 1 if in_len and out_len else 0
        return cls(in_len, out_len, hex_to_bits(hex_bits, n_bits))


def sample_hash(in_len: int, out_len: int, rng: np.random.Generator) -> TwoUniversalHash:
    if out_len > in_len:
        raise ValueError(f"out_len={out_len} exceeds in_len={in_len}")
    n_bits = in_len + out_len - 1 if in_len and out_len else 0
    return TwoUniversalHash(in_len, out_len, rng.integers(0, 2, n_bits, dtype=np.uint8))


def apply_hash(h: TwoUniversalHash, a) -> np.ndarray:
    a = np.asarray(a, dtype=np.uint8).ravel()
    if a.size != h.in_len:
        raise ValueError(f"input has {a.size} bits, hash expects {h.in_len}")
    if h.out_len == 0:
        return np.zeros(0, dtype=np.uint8)
    return kernels.toeplitz_hash(h.toeplitz_bits, a, h.out_len)


def toeplitz_matrix(bits, in_len: int, out_len: int) -> np.ndarray:
    """Dense ``out_len x in_len`` matrix, for small instances and cross-checks."""
    bits = np.asarray(bits, dtype=np.uint8)
    i = np.arange(out_len)[:, None]
    j = np.arange(in_len)[None, :]
    return bits[i - j + in_len - 1]


def bits_to_hex(bits) -> str:
    """Pack bits MSB-first into hex; the bit count travels separately."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    return np.packbits(bits).tobytes().hex()


def hex_to_bits(hex_str: str, n_bits: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(hex_str), dtype=np.uint8)
    bits = np.unpackbits(raw)
    if bits.size < n_bits or np.any(bits[n_bits:]):
        raise ValueError("hex string does not encode the stated number of bits")
    return bits[:n_bits].copy()


def collision_count(a, b, out_len: int, draws: int, rng: np.random.Generator, chunk: int = 20_000) -> int:
    """How many of ``draws`` independent Toeplitz hashes map ``a`` and ``b`` to the same output.

    Each draw uses fresh uniform seed bits, exactly as :func:`sample_hash`,
    and the matrices are built with the same indexing as :func:`toeplitz_matrix`.
    """
    a = np.asarray(a, dtype=np.uint8).ravel()
    b = np.asarray(b, dtype=np.uint8).ravel()
    if a.size != b.size:
        raise ValueError("inputs differ in length")
    in_len = a.size
    if not 1 <= out_len <= in_len:
        raise ValueError("need 1 <= out_len <= in_len")
    diff = (a ^ b).astype(bool)
    # T a = T b iff T (a xor b) = 0; only the columns where they differ matter
    i = np.arange(out_len)[:, None]
    j = np.flatnonzero(diff)[None, :]
    idx = i - j + in_len - 1
    n_bits = in_len + out_len - 1
    hits = 0
    done = 0
    while done < draws:
        k = min(chunk, draws - done)
        seeds = rng.integers(0, 2, (k, n_bits), dtype=np.uint8)
        parity = seeds[:, idx].sum(axis=2) & 1
        hits += int(np.count_nonzero(~parity.any(axis=1)))
        done += k
    return hits
