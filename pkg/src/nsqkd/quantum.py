"""Honest correlation source: equatorial measurements on a noisy EPR pair.

State ``rho = p |Phi><Phi| + (1 - p) I/4`` with ``|Phi> = (|00> + |11>)/sqrt2``.
Every measurement is a basis ``(|0> -/+ e^{i phi}|1>)/sqrt2`` on the equator of
the Bloch sphere. Outcome 0 is the ``-`` vector for both parties.

Alice's setting x has phase ``pi x / M``. Bob's setting y < M has phase
``-pi (y - 1/2) / M`` and his raw-key setting y = M has phase 0, matching
Alice's x = 0. With this offset the correlated setting pairs are exactly
``y = x`` and ``y = x + 1 mod M``; see :func:`bob_phase`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boxcore import ConditionalBox


@dataclass(frozen=True)
class EprParams:
    p: float
    M: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"purity p={self.p} outside [0, 1]")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"M must be an integer >= 2, got {self.M}")


def alice_phase(x: int, M: int) -> float:
    return math.pi * x / M


def bob_phase(y: int, M: int) -> float:
    # the offset -1/2 (not +1/2) puts both y = x and y = x + 1 at angular
    # distance pi/(2M) from Alice's direction, which the BC chain requires
    if y == M:
        return 0.0
    return -math.pi * (y - 0.5) / M


def _basis_vector(phase: float, outcome: int) -> np.ndarray:
    sign = -1.0 if outcome == 0 else 1.0
    return np.array([1.0, sign * np.exp(1j * phase)]) / math.sqrt(2.0)


def _projector(phase: float, outcome: int) -> np.ndarray:
    v = _basis_vector(phase, outcome)
    return np.outer(v, v.conj())


def epr_state(p: float) -> np.ndarray:
    phi = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0)
    return p * np.outer(phi, phi) + (1.0 - p) * np.eye(4) / 4.0


def epr_box(params: EprParams) -> ConditionalBox:
    """Born-rule box Tr[rho (Pi_a^x (x) Pi_b^y)] over all settings including y = M."""
    p, M = params.p, int(params.M)
    rho = epr_state(p)
    alice = np.array([[_projector(alice_phase(x, M), a) for x in range(M)] for a in (0, 1)])
    bob = np.array([[_projector(bob_phase(y, M), b) for y in range(M + 1)] for b in (0, 1)])
    # joint[a, b, x, y] = Tr[rho (A_ax (x) B_by)]
    rho4 = rho.reshape(2, 2, 2, 2)
    P = np.einsum("ijkl,axki,bylj->abxy", rho4, alice, bob, optimize=True).real
    # Born-rule rounding sits far below the box tolerances
    P = np.clip(P, 0.0, None)
    P /= P.sum(axis=(0, 1), keepdims=True)
    return ConditionalBox(P)


def expected_bc(p: float, M: int) -> float:
    """Closed-form Braunstein-Caves mean of :func:`epr_box`."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"purity p={p} outside [0, 1]")
    if M < 2:
        raise ValueError("M must be >= 2")
    return 0.5 + M * (p * math.sin(math.pi / (4 * M)) ** 2 + (1.0 - p) / 2.0)


def raw_error_rate(p: float) -> float:
    """P(A != B) on the raw-key settings x = 0, y = M."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"purity p={p} outside [0, 1]")
    return (1.0 - p) / 2.0
