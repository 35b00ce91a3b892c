"""No-signaling boxes, the Braunstein-Caves functional and its dual vectors.

A single-pair box is stored as a dense array ``P[a, b, x, y]`` with
``a, b in {0, 1}``, ``x in {0..M-1}`` and ``y in {0..M-1}`` (plus ``y = M``
when Bob's raw-key setting is carried). An N-pair box uses the axis order
``(a_1..a_N, b_1..b_N, x_1..x_N, y_1..y_N)``, which for N = 1 coincides with
the single-pair layout.

Dual vectors (mu, nu, beta_a, beta) live on the ``M x M`` estimation block
only; Bob's ``y = M`` column never enters a contraction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

MAX_SETTINGS = 16
MAX_PAIRS = 4

NORM_TOL = 1e-12
CLAMP_TOL = 1e-15
NS_TOL_SINGLE = 1e-12
NS_TOL_MULTI = 1e-10
IDENTITY_TOL = 1e-10


class BoxShapeError(ValueError):
    """Array shape does not describe a box."""


class InternalIdentityError(RuntimeError):
    """Two independent evaluations of the same functional disagree."""


class PreconditionError(ValueError):
    """An input violates the premise an identity relies on."""


def _validate_entries(entries: np.ndarray, n_pairs: int) -> tuple[int, bool]:
    shape = entries.shape
    if entries.ndim != 4 * n_pairs:
        raise BoxShapeError(f"expected {4 * n_pairs} axes, got {entries.ndim}")
    outcome_axes = shape[: 2 * n_pairs]
    if any(s != 2 for s in outcome_axes):
        raise BoxShapeError(f"outcome axes must have size 2, got {outcome_axes}")
    xs = set(shape[2 * n_pairs : 3 * n_pairs])
    ys = set(shape[3 * n_pairs :])
    if len(xs) != 1 or len(ys) != 1:
        raise BoxShapeError("all pairs must share the same setting counts")
    M = xs.pop()
    My = ys.pop()
    if M < 2 or M > MAX_SETTINGS:
        raise BoxShapeError(f"setting count M={M} outside [2, {MAX_SETTINGS}]")
    if My not in (M, M + 1):
        raise BoxShapeError(f"Bob's setting axis must have size M or M+1, got {My}")
    return M, My == M + 1


def _clean_probabilities(entries: np.ndarray, n_pairs: int) -> np.ndarray:
    arr = np.array(entries, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("box entries must be finite")
    if arr.min(initial=0.0) < -CLAMP_TOL:
        raise ValueError(f"negative probability {arr.min():.3e}")
    arr[arr < 0] = 0.0
    norm = arr.sum(axis=tuple(range(2 * n_pairs)))
    tol = NORM_TOL if n_pairs == 1 else NS_TOL_MULTI
    if np.max(np.abs(norm - 1.0)) > tol:
        raise ValueError(f"box not normalized: max deviation {np.max(np.abs(norm - 1.0)):.3e}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ConditionalBox:
    """Conditional distribution P(a, b | x, y) of one Alice-Bob pair."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries)
        M, extra = _validate_entries(arr, 1)
        object.__setattr__(self, "entries", _clean_probabilities(arr, 1))
        object.__setattr__(self, "_M", M)
        object.__setattr__(self, "_extra", extra)

    @property
    def M(self) -> int:
        return self._M

    @property
    def bob_extra(self) -> bool:
        return self._extra

    @property
    def n_pairs(self) -> int:
        return 1

    @property
    def block(self) -> np.ndarray:
        """Entries restricted to the M x M estimation settings."""
        return self.entries[:, :, :, : self.M]

    def prob(self, a: int, b: int, x: int, y: int) -> float:
        return float(self.entries[a, b, x, y])

    def allclose(self, other: "ConditionalBox", atol: float = 1e-12) -> bool:
        return self.entries.shape == other.entries.shape and np.allclose(
            self.entries, other.entries, rtol=0.0, atol=atol
        )

    def as_nbox(self) -> "NBox":
        return NBox(self.entries)


@dataclass(frozen=True, eq=False)
class NBox:
    """Joint conditional distribution of N Alice-Bob pairs."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries)
        if arr.ndim % 4 or arr.ndim == 0:
            raise BoxShapeError(f"number of axes must be a multiple of 4, got {arr.ndim}")
        n_pairs = arr.ndim // 4
        if n_pairs > MAX_PAIRS:
            raise BoxShapeError(f"N={n_pairs} exceeds the exact-enumeration cap {MAX_PAIRS}")
        M, extra = _validate_entries(arr, n_pairs)
        object.__setattr__(self, "entries", _clean_probabilities(arr, n_pairs))
        object.__setattr__(self, "_N", n_pairs)
        object.__setattr__(self, "_M", M)
        object.__setattr__(self, "_extra", extra)

    @property
    def N(self) -> int:
        return self._N

    @property
    def n_pairs(self) -> int:
        return self._N

    @property
    def M(self) -> int:
        return self._M

    @property
    def bob_extra(self) -> bool:
        return self._extra

    @property
    def block(self) -> np.ndarray:
        index = (slice(None),) * (3 * self.N) + (slice(0, self.M),) * self.N
        return self.entries[index]

    def allclose(self, other: "NBox", atol: float = 1e-12) -> bool:
        return self.entries.shape == other.entries.shape and np.allclose(
            self.entries, other.entries, rtol=0.0, atol=atol
        )


Box = ConditionalBox | NBox


# --------------------------------------------------------------------------
# no-signaling


@dataclass
class NSReport:
    """Outcome of a no-signaling check.

    ``residuals`` maps ``"normalization"`` and one label per party (``"A1"``,
    ``"B1"``, ...) to the largest deviation found. A party's residual measures
    how much the marginal of all *other* parties moves when that party changes
    its setting. ``worst`` names the offending (party, setting, outcome) triple.
    """

    residuals: dict[str, float]
    worst: tuple[str, int, tuple[int, ...]] | None
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self) -> None:
        signaling = [v for k, v in self.residuals.items() if k != "normalization"]
        self.passed = max(signaling, default=0.0) <= self.tol and self.residuals["normalization"] <= self.tol

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())


def _party_axes(n_pairs: int, party: str, k: int) -> tuple[int, int]:
    if party == "A":
        return k, 2 * n_pairs + k
    return n_pairs + k, 3 * n_pairs + k


def nonsignaling_residuals(entries: np.ndarray, n_pairs: int) -> NSReport:
    """Residuals of every single-party no-signaling constraint of a raw array."""
    residuals: dict[str, float] = {}
    norm = entries.sum(axis=tuple(range(2 * n_pairs)))
    residuals["normalization"] = float(np.max(np.abs(norm - 1.0)))
    worst = None
    worst_val = -1.0
    for party in ("A", "B"):
        for k in range(n_pairs):
            out_ax, set_ax = _party_axes(n_pairs, party, k)
            marg = entries.sum(axis=out_ax, keepdims=True)
            ref = np.take(marg, [0], axis=set_ax)
            dev = np.abs(marg - ref)
            val = float(dev.max())
            residuals[f"{party}{k + 1}"] = val
            if val > worst_val:
                worst_val = val
                idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
                outcome = tuple(int(i) for ax, i in enumerate(idx[: 2 * n_pairs]) if ax != out_ax)
                worst = (f"{party}{k + 1}", int(idx[set_ax]), outcome)
    return NSReport(residuals, worst, tol=0.0)


def check_nonsignaling(box: Box, tol: float | None = None) -> NSReport:
    """Check normalization and every single-party no-signaling constraint.

    The default tolerance is 1e-12 for a single pair and 1e-10 for N pairs.
    """
    if not isinstance(box, (ConditionalBox, NBox)):
        raise BoxShapeError(f"not a box: {type(box).__name__}")
    if tol is None:
        tol = NS_TOL_SINGLE if box.n_pairs == 1 else NS_TOL_MULTI
    report = nonsignaling_residuals(box.entries, box.n_pairs)
    return NSReport(report.residuals, report.worst, tol)


# --------------------------------------------------------------------------
# the Braunstein-Caves functional and its dual vectors


def estimation_settings(M: int) -> list[tuple[int, int]]:
    """Setting pairs with y = x or y = x + 1 mod M, in a fixed order."""
    pairs = []
    for x in range(M):
        pairs.append((x, x))
        pairs.append((x, (x + 1) % M))
    return pairs


def in_estimation_set(x, y, M: int):
    """Vectorized membership test for the estimation setting pairs."""
    x = np.asarray(x)
    y = np.asarray(y)
    return (y == x) | (y == (x + 1) % M)


def bc_variable(a, b, x, y, M: int):
    """The Braunstein-Caves random variable 1/2 + M (a xor b xor [x=M-1][y=0])."""
    a = np.asarray(a)
    b = np.asarray(b)
    x = np.asarray(x)
    y = np.asarray(y)
    special = ((x == M - 1) & (y == 0)).astype(np.int64)
    return 0.5 + M * (a ^ b ^ special)


@dataclass(frozen=True, eq=False)
class DualVector:
    """Real functional over the M x M block of a single-pair box."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.entries, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[:2] != (2, 2) or arr.shape[2] != arr.shape[3]:
            raise BoxShapeError(f"dual vector must have shape (2, 2, M, M), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def M(self) -> int:
        return self.entries.shape[2]

    def __add__(self, other: "DualVector") -> "DualVector":
        return DualVector(self.entries + other.entries)

    def __sub__(self, other: "DualVector") -> "DualVector":
        return DualVector(self.entries - other.entries)

    def __neg__(self) -> "DualVector":
        return DualVector(-self.entries)

    def __mul__(self, scalar: float) -> "DualVector":
        return DualVector(scalar * self.entries)

    __rmul__ = __mul__

    def __abs__(self) -> "DualVector":
        return DualVector(np.abs(self.entries))

    def dot(self, box: ConditionalBox) -> float:
        if box.M != self.M:
            raise BoxShapeError("dual vector and box disagree on M")
        return float(np.sum(self.entries * box.block))


def mu(M: int) -> DualVector:
    """1/(4M) on every entry of the estimation blocks."""
    _check_m(M)
    v = np.zeros((2, 2, M, M))
    for x, y in estimation_settings(M):
        v[:, :, x, y] = 1.0 / (4 * M)
    return DualVector(v)


def nu(M: int) -> DualVector:
    """Signed 1/2 entries on the anti-correlated outcomes of each estimation block.

    Signs are chosen so that ``(mu + nu) . P = P(A=0 | X=0)`` on every
    no-signaling box: the blocks (0,0) and (x,x+1) carry +1/2 on (a,b)=(0,1),
    the blocks (x,x) with x >= 1 carry -1/2 there, and the wrap-around block
    (M-1, 0) carries +1/2 on (0,0) and -1/2 on (1,1).
    """
    _check_m(M)
    v = np.zeros((2, 2, M, M))
    for x in range(M):
        if x == M - 1:
            v[0, 0, x, 0] += 0.5
            v[1, 1, x, 0] -= 0.5
        else:
            v[0, 1, x, x + 1] += 0.5
            v[1, 0, x, x + 1] -= 0.5
        sign = 1.0 if x == 0 else -1.0
        v[0, 1, x, x] += 0.5 * sign
        v[1, 0, x, x] -= 0.5 * sign
    return DualVector(v)


def beta_a(M: int, a: int) -> DualVector:
    if a not in (0, 1):
        raise ValueError("a must be a bit")
    return mu(M) + nu(M) * (-1.0) ** a


def beta(M: int) -> DualVector:
    return mu(M) + abs(nu(M))


def _check_m(M: int) -> None:
    if not isinstance(M, (int, np.integer)) or M < 2 or M > MAX_SETTINGS:
        raise ValueError(f"M must be an integer in [2, {MAX_SETTINGS}], got {M}")


def tensor(vectors: Sequence[DualVector]) -> np.ndarray:
    """Tensor product of dual vectors in the N-pair axis order."""
    if not vectors:
        raise ValueError("need at least one vector")
    out = vectors[0].entries
    for v in vectors[1:]:
        out = np.multiply.outer(out, v.entries)
    n = len(vectors)
    perm = [4 * k + j for j in range(4) for k in range(n)]
    return out.transpose(perm)


def bc_value(box: ConditionalBox) -> float:
    """Mean of the Braunstein-Caves variable under uniform estimation settings.

    Evaluated both by direct expectation and as ``beta . P``; the two must
    agree within 1e-10.
    """
    M = box.M
    pairs = estimation_settings(M)
    direct = 0.0
    for x, y in pairs:
        for a in (0, 1):
            for b in (0, 1):
                direct += box.entries[a, b, x, y] * float(bc_variable(a, b, x, y, M))
    direct /= len(pairs)
    dual = beta(M).dot(box)
    if abs(direct - dual) > IDENTITY_TOL:
        raise InternalIdentityError(f"direct {direct!r} != beta.P {dual!r}")
    return direct


def bc_product_value(box: Box) -> float:
    """<B_1 ... B_N> for N pairs, computed as beta^{(x)N} . P."""
    if isinstance(box, ConditionalBox):
        return bc_value(box)
    vec = tensor([beta(box.M)] * box.N)
    return float(np.sum(vec * box.block))


def alice_marginal_zero(box: Box, a_string: Sequence[int]) -> float:
    """P(A = a | X = 0...0), read off at Bob's settings y = 0...0."""
    n = box.n_pairs
    index = tuple(int(a) for a in a_string) + (slice(None),) * n + (0,) * (2 * n)
    return float(box.entries[index].sum())


def marginal_identity_residual(box: Box, a_string: Sequence[int]) -> float:
    """|P(a | 0) - (beta_{a_1} x ... x beta_{a_N}) . P| for a no-signaling box."""
    a_string = tuple(int(a) for a in a_string)
    n = box.n_pairs
    if len(a_string) != n or any(a not in (0, 1) for a in a_string):
        raise ValueError(f"a_string must be {n} bits")
    report = check_nonsignaling(box)
    if not report.passed:
        raise PreconditionError(f"box is signaling (max residual {report.max_residual:.3e})")
    vec = tensor([beta_a(box.M, a) for a in a_string])
    return abs(alice_marginal_zero(box, a_string) - float(np.sum(vec * box.block)))


# --------------------------------------------------------------------------
# constructions


def local_deterministic(
    fa: Sequence[int] | Callable[[int], int],
    fb: Sequence[int] | Callable[[int], int],
    M: int | None = None,
    bob_extra: bool = True,
) -> ConditionalBox:
    """Box where Alice outputs fa(x) and Bob outputs fb(y) with certainty."""
    if callable(fa) or callable(fb):
        if M is None:
            raise ValueError("M is required when maps are given as callables")
        n_y = M + 1 if bob_extra else M
        fa_list = [int(fa(x)) if callable(fa) else int(fa[x]) for x in range(M)]
        fb_list = [int(fb(y)) if callable(fb) else int(fb[y]) for y in range(n_y)]
    else:
        fa_list = [int(v) for v in fa]
        fb_list = [int(v) for v in fb]
        M = len(fa_list)
        if len(fb_list) not in (M, M + 1):
            raise BoxShapeError("fb must cover M or M+1 settings")
    P = np.zeros((2, 2, M, len(fb_list)))
    for x, a in enumerate(fa_list):
        for y, b in enumerate(fb_list):
            P[a, b, x, y] = 1.0
    return ConditionalBox(P)


def pr_analog(M: int, bob_extra: bool = True) -> ConditionalBox:
    """A xor B = [X=M-1][Y=0] with uniform marginals; raw-key column uncorrelated."""
    _check_m(M)
    P = np.zeros((2, 2, M, M + 1 if bob_extra else M))
    for x in range(M):
        for y in range(M):
            parity = int(x == M - 1 and y == 0)
            for a in (0, 1):
                P[a, a ^ parity, x, y] = 0.5
    if bob_extra:
        P[:, :, :, M] = 0.25
    return ConditionalBox(P)


def uniform_box(M: int, bob_extra: bool = True) -> ConditionalBox:
    _check_m(M)
    return ConditionalBox(np.full((2, 2, M, M + 1 if bob_extra else M), 0.25))


def mix(b1: ConditionalBox, b2: ConditionalBox, lam: float) -> ConditionalBox:
    """lam * b1 + (1 - lam) * b2."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixing weight {lam} outside [0, 1]")
    if b1.entries.shape != b2.entries.shape:
        raise BoxShapeError("boxes have different shapes")
    return ConditionalBox(lam * b1.entries + (1.0 - lam) * b2.entries)


def mixture(boxes: Sequence[ConditionalBox], weights: Sequence[float]) -> ConditionalBox:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.min() < 0 or not math.isclose(weights.sum(), 1.0, abs_tol=1e-12):
        raise ValueError("weights must be a probability vector")
    total = sum(w * b.entries for w, b in zip(weights, boxes))
    return ConditionalBox(total)


def product(*boxes: ConditionalBox) -> NBox:
    """Tensor product of independent pairs."""
    if not boxes:
        raise ValueError("need at least one box")
    shape = boxes[0].entries.shape
    if any(b.entries.shape != shape for b in boxes):
        raise BoxShapeError("all factors must share M and the raw-key flag")
    out = boxes[0].entries
    for b in boxes[1:]:
        out = np.multiply.outer(out, b.entries)
    n = len(boxes)
    perm = [4 * k + j for j in range(4) for k in range(n)]
    return NBox(out.transpose(perm))


def relabel(box: ConditionalBox, m: int) -> ConditionalBox:
    """Shift both settings by m and flip outcomes whose setting wrapped around.

    X -> X + m, Y -> Y + m (mod M), A -> A xor [X >= M - m], B -> B xor [Y >= M - m]
    on the estimation block. Bob's raw-key setting y = M is left in place and
    its outcome is never flipped.
    """
    M = box.M
    if not 0 <= m < M:
        raise ValueError(f"m={m} outside [0, {M})")
    P = box.entries
    Q = np.empty_like(P)
    n_y = P.shape[3]
    for x in range(M):
        fa = int(x >= M - m) if m else 0
        xn = (x + m) % M
        for y in range(n_y):
            if y == M:
                yn, fb = M, 0
            else:
                yn = (y + m) % M
                fb = int(y >= M - m) if m else 0
            for a in (0, 1):
                for b in (0, 1):
                    Q[a ^ fa, b ^ fb, xn, yn] = P[a, b, x, y]
    return ConditionalBox(Q)


def flip_outcomes(box: ConditionalBox, alice: bool = True, bob: bool = True) -> ConditionalBox:
    """Relabel outcomes a -> a xor 1 and/or b -> b xor 1 for every setting."""
    P = box.entries
    if alice:
        P = P[::-1]
    if bob:
        P = P[:, ::-1]
    return ConditionalBox(np.ascontiguousarray(P))


def deterministic_vertices(M: int, bob_extra: bool = True) -> list[ConditionalBox]:
    """All 2^M * 2^(M or M+1) local deterministic boxes."""
    n_y = M + 1 if bob_extra else M
    out = []
    for ia in range(2**M):
        fa = [(ia >> x) & 1 for x in range(M)]
        for ib in range(2**n_y):
            fb = [(ib >> y) & 1 for y in range(n_y)]
            out.append(local_deterministic(fa, fb))
    return out


def random_local_box(M: int, rng: np.random.Generator, n_components: int = 4, bob_extra: bool = True) -> ConditionalBox:
    """Dirichlet mixture of randomly drawn deterministic boxes."""
    n_y = M + 1 if bob_extra else M
    comps = [
        local_deterministic(rng.integers(0, 2, M), rng.integers(0, 2, n_y)) for _ in range(n_components)
    ]
    return mixture(comps, rng.dirichlet(np.ones(n_components)))


def random_nonsignaling_box(
    M: int,
    rng: np.random.Generator,
    n_local: int = 3,
    n_nonlocal: int = 2,
    bob_extra: bool = True,
) -> ConditionalBox:
    """Random point of the no-signaling polytope.

    Dirichlet-weighted mixture of deterministic boxes and relabeled or
    outcome-flipped PR-analog boxes, so membership holds by construction.
    """
    comps = []
    n_y = M + 1 if bob_extra else M
    for _ in range(n_local):
        comps.append(local_deterministic(rng.integers(0, 2, M), rng.integers(0, 2, n_y)))
    base = pr_analog(M, bob_extra)
    for _ in range(n_nonlocal):
        b = relabel(base, int(rng.integers(0, M)))
        if rng.random() < 0.5:
            b = flip_outcomes(b, alice=True, bob=False)
        comps.append(b)
    return mixture(comps, rng.dirichlet(np.ones(len(comps))))


# --------------------------------------------------------------------------
# JSON box files


def box_to_dict(box: Box, meta: dict[str, Any] | None = None) -> dict[str, Any]:
    out: dict[str, Any] = {
        "M": box.M,
        "bobExtra": box.bob_extra,
        "entries": [float(v) for v in box.entries.ravel(order="C")],
        "meta": meta or {},
    }
    if box.n_pairs > 1:
        out["N"] = box.n_pairs
    return out


def box_from_dict(data: dict[str, Any]) -> Box:
    """Rebuild a box from its JSON form, re-validating every invariant."""
    try:
        M = int(data["M"])
        extra = bool(data["bobExtra"])
        flat = np.asarray(data["entries"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise BoxShapeError(f"malformed box file: {exc}") from exc
    n = int(data.get("N", 1))
    n_y = M + 1 if extra else M
    shape = (2,) * (2 * n) + (M,) * n + (n_y,) * n
    if flat.size != int(np.prod(shape)):
        raise BoxShapeError(f"expected {int(np.prod(shape))} entries, got {flat.size}")
    entries = flat.reshape(shape)
    box: Box = ConditionalBox(entries) if n == 1 else NBox(entries)
    report = check_nonsignaling(box)
    if not report.passed:
        raise PreconditionError(f"box file is signaling: {report.residuals}")
    return box


def save_box(box: Box, path: str | Path, meta: dict[str, Any] | None = None) -> None:
    Path(path).write_text(json.dumps(box_to_dict(box, meta), indent=1))


def load_box(path: str | Path) -> Box:
    return box_from_dict(json.loads(Path(path).read_text()))
