"""Method of types and concentration bounds for symmetric sample strings.

Frequencies are keyed by integer count vectors so that equality and hashing
are exact on the ``1/N`` grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.special import gammaln

from .boxcore import PreconditionError

# enumerating more types than this is refused
MAX_TYPES = 1_000_000
GRID_TOL = 1e-9


@dataclass(frozen=True)
class Frequency:
    """Empirical distribution of a length-N string over ``range(alphabet)``.

    Attributes
    ----------
    counts : tuple of int
        Occurrences of each symbol; sums to ``N``.
    """

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.counts) == 0:
            raise ValueError("alphabet must be non-empty")
        if any(int(c) != c or c < 0 for c in self.counts):
            raise ValueError(f"counts must be non-negative integers, got {self.counts}")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def alphabet(self) -> int:
        return len(self.counts)

    @property
    def N(self) -> int:
        return sum(self.counts)

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.N

    def fractions(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(c, self.N) for c in self.counts)

    def class_size(self) -> int:
        """Number of strings whose frequency is this one (a multinomial coefficient)."""
        size = math.factorial(self.N)
        for c in self.counts:
            size //= math.factorial(c)
        return size


def freq(v_string: Sequence[int], alphabet: int | None = None) -> Frequency:
    """Frequency of a symbol string.

    Parameters
    ----------
    v_string : sequence of int
        Symbols in ``range(alphabet)``.
    alphabet : int, optional
        Alphabet size. Defaults to ``max(v_string) + 1``.
    """
    v = np.asarray(v_string, dtype=np.int64).ravel()
    if v.size == 0:
        raise ValueError("empty string has no frequency")
    if alphabet is None:
        alphabet = int(v.max()) + 1
    if v.min() < 0 or v.max() >= alphabet:
        raise ValueError(f"symbols must lie in range({alphabet})")
    return Frequency(tuple(np.bincount(v, minlength=alphabet).tolist()))


def enumerate_types(N: int, alphabet: int) -> Iterator[Frequency]:
    """All frequencies of length-N strings, as compositions of N into ``alphabet`` parts."""
    if N < 1 or alphabet < 1:
        raise ValueError("need N >= 1 and alphabet >= 1")
    if alphabet == 1:
        yield Frequency((N,))
        return
    # stars and bars: choose alphabet-1 cut points among N + alphabet - 1 slots
    for cuts in itertools.combinations(range(N + alphabet - 1), alphabet - 1):
        prev = -1
        counts = []
        for c in cuts:
            counts.append(c - prev - 1)
            prev = c
        counts.append(N + alphabet - 1 - prev - 1)
        yield Frequency(tuple(counts))


def type_count(N: int, alphabet: int) -> int:
    return math.comb(N + alphabet - 1, alphabet - 1)


def type_count_bound(N: int, alphabet: int) -> int:
    """Upper bound ``(N+1)^(|V|-1)`` on the number of distinct frequencies."""
    if N < 1 or alphabet < 1:
        raise ValueError("need N >= 1 and alphabet >= 1")
    return (N + 1) ** (alphabet - 1)


def _as_distribution(P_V: Sequence[float]) -> np.ndarray:
    p = np.asarray(P_V, dtype=float).ravel()
    if p.size == 0 or np.any(p < -1e-15) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("P_V must be a probability vector")
    return np.clip(p, 0.0, None)


def type_probability(P_V: Sequence[float], q: Frequency) -> float:
    """Probability that N i.i.d. draws from ``P_V`` have frequency ``q``."""
    p = _as_distribution(P_V)
    if p.size != q.alphabet:
        raise ValueError("alphabet mismatch")
    counts = np.asarray(q.counts)
    if np.any((p == 0) & (counts > 0)):
        return 0.0
    nz = counts > 0
    log_p = gammaln(q.N + 1) - gammaln(counts + 1).sum() + (counts[nz] * np.log(p[nz])).sum()
    return float(np.exp(log_p))


def type_distribution(P_V: Sequence[float], N: int) -> dict[Frequency, float]:
    """Exact law of ``freq(V)`` for N i.i.d. draws from ``P_V``."""
    p = _as_distribution(P_V)
    if type_count(N, p.size) > MAX_TYPES:
        raise ValueError(f"{type_count(N, p.size)} types exceed the enumeration cap {MAX_TYPES}")
    return {q: type_probability(p, q) for q in enumerate_types(N, p.size)}


def _grid_counts(P_V: Sequence[float], N: int) -> tuple[int, ...]:
    p = _as_distribution(P_V)
    scaled = p * N
    counts = np.rint(scaled)
    if np.max(np.abs(scaled - counts)) > GRID_TOL:
        raise PreconditionError(f"P_V={list(p)} is not on the 1/{N} grid")
    return tuple(int(c) for c in counts)


def mode_is_pv(P_V: Sequence[float], N: int, rtol: float = 1e-12) -> bool:
    """Whether the most likely frequency of N i.i.d. draws is ``P_V`` itself.

    Ties count as success: ``P_V`` only has to be among the maximizers.

    Raises
    ------
    PreconditionError
        If some ``P_V(v)`` is not a multiple of ``1/N``.
    """
    target = Frequency(_grid_counts(P_V, N))
    dist = type_distribution(P_V, N)
    best = max(dist.values())
    return dist[target] >= best * (1.0 - rtol)


def grid_distributions(N: int, alphabet: int) -> Iterator[tuple[float, ...]]:
    for q in enumerate_types(N, alphabet):
        yield tuple(c / N for c in q.counts)


def bernstein_tail(N: int, omega: float) -> float:
    """Bound ``2 exp(-omega^2 / 4)`` on a sum of N i.i.d. variables straying
    more than ``omega sqrt(N <V^2>)`` from its mean. Does not depend on N."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    return 2.0 * math.exp(-(omega**2) / 4.0)


def symmetric_event_bound(epsilon: float, N: int, alphabet: int) -> float:
    """Probability bound ``eps (N+1)^(|V|-1)`` for an event under any
    permutation-invariant law, given it has probability at most ``eps``
    under every i.i.d. law."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    return epsilon * type_count_bound(N, alphabet)


def estimation_confidence(N1: int, N2: int, v_plus: float, alphabet: int) -> float:
    """Failure probability of ``<V_1...V_N1> <= (V_est + N2^(-1/4))^N1``.

    Returns ``2 (N1+N2+1)^(|V|-1) exp(-sqrt(N2) / (4 v_plus^2))``, not clamped.
    """
    if N1 < 1 or N2 < 1:
        raise ValueError("N1 and N2 must be positive")
    if v_plus <= 0:
        raise ValueError("v_plus must be positive")
    return 2.0 * type_count_bound(N1 + N2, alphabet) * math.exp(-math.sqrt(N2) / (4.0 * v_plus**2))


def iid_estimation_confidence(N2: int, v_plus: float) -> float:
    """The same failure bound for i.i.d. variables, without the type-count factor."""
    if N2 < 1 or v_plus <= 0:
        raise ValueError("need N2 >= 1 and v_plus > 0")
    return 2.0 * math.exp(-math.sqrt(N2) / (4.0 * v_plus**2))


def bc_estimation_failure(N: int, N_e: int, M: int) -> float:
    """Type-count bound specialised to the two-valued BC variable, ``v_plus = M + 1/2``."""
    if N < 1 or N_e < 1:
        raise ValueError("N and N_e must be positive")
    return 2.0 * (N + 1) * math.exp(-math.sqrt(N_e) / (2 * M + 1) ** 2)


def bc_estimation_failure_loose(N: int, N_e: int, M: int) -> float:
    """Looser closed form ``3 N exp(-sqrt(N_e) / (3M)^2)`` clamped to [0, 1]."""
    if N < 1 or N_e < 1:
        raise ValueError("N and N_e must be positive")
    return min(1.0, max(0.0, 3.0 * N * math.exp(-math.sqrt(N_e) / (3 * M) ** 2)))


def symmetrize(dist: dict[tuple[int, ...], float], alphabet: int) -> dict[Frequency, float]:
    """Frequency law of a distribution over strings."""
    out: dict[Frequency, float] = {}
    for s, pr in dist.items():
        q = freq(s, alphabet)
        out[q] = out.get(q, 0.0) + pr
    return out


def type_mixture(weights: dict[Frequency, float], N: int, alphabet: int) -> dict[tuple[int, ...], float]:
    """Law over strings of ``sum_q weights[q] * uniform(type class q)``."""
    out: dict[tuple[int, ...], float] = {}
    for s in itertools.product(range(alphabet), repeat=N):
        q = freq(s, alphabet)
        w = weights.get(q, 0.0)
        if w:
            out[s] = w / q.class_size()
    return out


def is_symmetric(dist: dict[tuple[int, ...], float], tol: float = 1e-12) -> bool:
    for s, pr in dist.items():
        for perm in set(itertools.permutations(s)):
            if abs(dist.get(perm, 0.0) - pr) > tol:
                return False
    return True


def strings(N: int, alphabet: int) -> Iterable[tuple[int, ...]]:
    return itertools.product(range(alphabet), repeat=N)
