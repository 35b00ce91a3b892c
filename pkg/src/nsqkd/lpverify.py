"""Adversary linear programs over no-signaling extensions of an Alice-Bob box.

A third party E with a single setting and ``2^N`` outcomes extends the box
``P(a, b | x, y)`` to ``P(a, b, e | x, y)``. Outcome ``e`` is read as the
guess "Alice's string is e", so the best guessing probability of Alice's
outcome at a fixed setting string is one linear program.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .boxcore import (
    MAX_SETTINGS,
    ConditionalBox,
    NBox,
    PreconditionError,
    beta,
    beta_a,
    bc_product_value,
    check_nonsignaling,
    tensor,
)
from .simplex import LpProblem, LpResult, solve_lp

# dense-tableau budget: number of LP variables
MAX_LP_VARS = 6000
TRI_NS_TOL = 1e-8
METHODS = ("auto", "direct", "reduced")
# relative right-hand-side perturbation used by the reduced route
REDUCED_PERTURB = 1e-7


@dataclass(frozen=True, eq=False)
class TripartiteBox:
    """``P(a-string, b-string, e | x-string, y-string, z)``.

    Axis order: ``a_1..a_N, b_1..b_N, e, x_1..x_N, y_1..y_N, z``.
    """

    entries: np.ndarray
    N: int

    def __post_init__(self) -> None:
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 4 * self.N + 2:
            raise ValueError(f"expected {4 * self.N + 2} axes for N={self.N}, got {arr.ndim}")
        arr[(arr < 0) & (arr > -1e-12)] = 0.0
        if np.any(arr < 0):
            raise ValueError("negative probabilities")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def M(self) -> int:
        return self.entries.shape[2 * self.N + 1]

    @property
    def eve_outcomes(self) -> int:
        return self.entries.shape[2 * self.N]

    @property
    def eve_settings(self) -> int:
        return self.entries.shape[-1]

    def ab_marginal(self, z: int = 0):
        P = self.entries[..., z].sum(axis=2 * self.N)
        return ConditionalBox(P) if self.N == 1 else NBox(P)

    def alice_eve(self, x_string=None) -> np.ndarray:
        """``P(a, e | X = x_string, z)`` as an array indexed ``(z, a, e)``.

        Bob is summed out at settings 0, which is harmless for a no-signaling box.
        """
        N = self.N
        x_string = (0,) * N if x_string is None else tuple(x_string)
        idx = (slice(None),) * (2 * N + 1) + x_string + (0,) * N + (slice(None),)
        P = self.entries[idx].sum(axis=tuple(range(N, 2 * N)))  # (a..., e, z)
        P = P.reshape(2**N, self.eve_outcomes, self.eve_settings)
        return np.transpose(P, (2, 0, 1))

    def nonsignaling_residual(self) -> float:
        return tripartite_ns_residual(self.entries, self.N)


def _party_axes(N: int) -> list[tuple[int, int]]:
    """(outcome axis, setting axis) of every party, Eve last."""
    pairs = [(k, 2 * N + 1 + k) for k in range(N)]
    pairs += [(N + k, 3 * N + 1 + k) for k in range(N)]
    pairs.append((2 * N, 4 * N + 1))
    return pairs


def tripartite_ns_residual(entries: np.ndarray, N: int) -> float:
    """Largest violation of normalization or of any single-party no-signaling constraint."""
    out_axes = tuple(range(2 * N + 1))
    worst = float(np.max(np.abs(entries.sum(axis=out_axes) - 1.0)))
    for o, s in _party_axes(N):
        marg = entries.sum(axis=o, keepdims=True)
        worst = max(worst, float(np.max(np.abs(marg - np.take(marg, [0], axis=s)))))
    return worst


def _box_entries(box) -> tuple[np.ndarray, int]:
    if isinstance(box, ConditionalBox):
        return box.entries, 1
    if isinstance(box, NBox):
        return box.entries, box.N
    raise TypeError(f"not a box: {type(box).__name__}")


def bits_of(index: int, n: int) -> tuple[int, ...]:
    return tuple((index >> (n - 1 - t)) & 1 for t in range(n))


def _ns_rows(shape: tuple[int, ...], N: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Index pairs (plus, minus) of the Alice/Bob no-signaling equalities.

    Each row reads ``sum_o v[o, s=t, rest] - sum_o v[o, s=0, rest] = 0``.
    """
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    rows = []
    for o, s in _party_axes(N)[:-1]:
        moved = np.moveaxis(idx, (o, s), (0, 1))
        n_set = moved.shape[1]
        flat = moved.reshape(2, n_set, -1)
        for t in range(1, n_set):
            rows.append((flat[:, t, :], flat[:, 0, :]))
    return rows


def build_guessing_lp(box, x_target) -> tuple[LpProblem, tuple[int, ...]]:
    entries, N = _box_entries(box)
    x_target = _as_setting_string(x_target, N)
    n_e = 2**N
    ab_shape = entries.shape
    shape = ab_shape[: 2 * N] + (n_e,) + ab_shape[2 * N :]
    n_vars = int(np.prod(shape))
    if n_vars > MAX_LP_VARS:
        raise ValueError(f"LP with {n_vars} variables exceeds the dense-simplex budget {MAX_LP_VARS}")
    idx = np.arange(n_vars).reshape(shape)

    blocks_A = []
    blocks_b = []
    # the extension reproduces the Alice-Bob box when E is ignored
    marg = np.moveaxis(idx, 2 * N, -1).reshape(-1, n_e)
    A1 = np.zeros((marg.shape[0], n_vars))
    np.put_along_axis(A1, marg, 1.0, axis=1)
    blocks_A.append(A1)
    blocks_b.append(entries.ravel())
    for plus, minus in _ns_rows(shape, N):
        n_rows = plus.shape[1]
        A2 = np.zeros((n_rows, n_vars))
        r = np.arange(n_rows)
        for k in range(2):
            A2[r, plus[k]] += 1.0
            A2[r, minus[k]] -= 1.0
        blocks_A.append(A2)
        blocks_b.append(np.zeros(n_rows))
    A = np.vstack(blocks_A)
    b = np.concatenate(blocks_b)

    c = np.zeros(shape)
    for e in range(n_e):
        c[bits_of(e, N) + (slice(None),) * N + (e,) + x_target + (0,) * N] = 1.0
    return LpProblem(c.ravel(), A, b), shape


def _as_setting_string(x, N: int) -> tuple[int, ...]:
    if np.isscalar(x):
        x = (int(x),) * N
    x = tuple(int(v) for v in x)
    if len(x) != N:
        raise ValueError(f"setting string must have {N} entries")
    return x


def _sub_box_ns_matrix(shape: tuple[int, ...], N: int) -> np.ndarray:
    """No-signaling equalities of one unnormalized box with axes (a.., b.., x.., y..)."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    blocks = []
    for o, s_ax in [(k, 2 * N + k) for k in range(N)] + [(N + k, 3 * N + k) for k in range(N)]:
        moved = np.moveaxis(idx, (o, s_ax), (0, 1))
        flat = moved.reshape(2, moved.shape[1], -1)
        r = np.arange(flat.shape[2])
        for t in range(1, moved.shape[1]):
            R = np.zeros((flat.shape[2], idx.size))
            for k in range(2):
                R[r, flat[k, t]] += 1.0
                R[r, flat[k, 0]] -= 1.0
            blocks.append(R)
    return np.vstack(blocks)


def _guess_objectives(shape: tuple[int, ...], N: int, x_target: tuple[int, ...]) -> list[np.ndarray]:
    """For each Eve outcome e, the entries of its sub-box that count as a correct guess."""
    objs = []
    for e in range(2**N):
        c = np.zeros(shape)
        c[bits_of(e, N) + (slice(None),) * N + x_target + (0,) * N] = 1.0
        objs.append(c.ravel())
    return objs


def _reduced_guessing(entries: np.ndarray, N: int, x_target: tuple[int, ...]):
    """Guessing LP over coordinates of the no-signaling subspace, solved through its dual.

    Eve's sub-boxes are ``P_e = W theta_e`` for an orthonormal basis ``W`` of
    the no-signaling subspace, with the last one fixed by ``sum_e P_e = P``.
    Positivity reads ``G theta <= h``; the dual ``min h.y, G^T y = c, y >= 0``
    has only ``dim(theta)`` equality rows. The primal point is recovered from
    the active rows of the optimal dual basis and certified separately.
    """
    shape = entries.shape
    n = entries.size
    E = 2**N
    W = scipy.linalg.null_space(_sub_box_ns_matrix(shape, N))
    d = W.shape[1]
    if E * n > MAX_LP_VARS:
        raise ValueError(f"LP with {E * n} variables exceeds the dense-simplex budget {MAX_LP_VARS}")
    P = entries.ravel()
    G = np.zeros((E * n, (E - 1) * d))
    for e in range(E - 1):
        G[e * n : (e + 1) * n, e * d : (e + 1) * d] = -W
        G[(E - 1) * n :, e * d : (e + 1) * d] = W
    h = np.zeros(E * n)
    h[(E - 1) * n :] = P
    objs = _guess_objectives(shape, N, x_target)
    c_theta = np.concatenate([W.T @ (objs[e] - objs[-1]) for e in range(E - 1)])
    const = float(objs[-1] @ P)

    result = solve_lp(LpProblem(-h, G.T, c_theta), rule="dantzig", perturb=REDUCED_PERTURB)
    if not result.ok:
        raise RuntimeError(f"reduced guessing LP ended with status {result.status}")
    active = np.asarray(result.basis)
    theta, *_ = np.linalg.lstsq(G[active], h[active], rcond=None)

    subs = [W @ theta[e * d : (e + 1) * d] for e in range(E - 1)]
    subs.append(P - np.sum(subs, axis=0))
    tri = np.stack([s.reshape(shape) for s in subs], axis=2 * N)
    if tri.min() < -TRI_NS_TOL:
        raise ArithmeticError(f"recovered extension has a negative entry {tri.min():.2e}")
    tri = np.clip(tri, 0.0, None)
    value = float(sum(objs[e] @ tri.take(e, axis=2 * N).ravel() for e in range(E)))
    dual_value = const - result.optimum
    if abs(value - dual_value) > 1e-8:
        raise ArithmeticError(f"duality gap {abs(value - dual_value):.2e} in the reduced guessing LP")
    return value, tri, result


def _restrict_to_block(box):
    return ConditionalBox(box.block) if isinstance(box, ConditionalBox) else NBox(box.block)


def max_guessing(
    box, x_target=0, method: str = "auto", include_key_setting: bool | None = None
) -> tuple[float, TripartiteBox, LpResult]:
    """Largest probability that E guesses Alice's outcome string at ``x_target``.

    Parameters
    ----------
    box : ConditionalBox or NBox
        No-signaling, with ``N <= 2`` and ``M <= 4``.
    x_target : int or sequence of int
    method : {"auto", "direct", "reduced"}
        ``"direct"`` solves over the tripartite entries; ``"reduced"`` solves
        the dual over no-signaling coordinates and is much smaller. ``"auto"``
        takes direct for one pair and reduced for two.
    include_key_setting : bool, optional
        Whether Bob's raw-key setting constrains E. Dropping it removes
        constraints, so the value can only grow. Defaults to True for one
        pair and False for two, where it keeps the solve to seconds.

    Returns
    -------
    value : float
    witness : TripartiteBox
        An optimal extension of the box actually solved, with one Eve setting.
    result : LpResult
    """
    entries, N = _box_entries(box)
    if N > 2:
        raise ValueError("exact adversary LPs are limited to N <= 2")
    if box.M > min(4, MAX_SETTINGS):
        raise ValueError("exact adversary LPs are limited to M <= 4")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    report = check_nonsignaling(box)
    if not report.passed:
        raise PreconditionError(f"box is signaling (max residual {report.max_residual:.3e})")
    x_target = _as_setting_string(x_target, N)
    if any(not 0 <= v < box.M for v in x_target):
        raise ValueError(f"target settings must lie in 0..{box.M - 1}")
    if include_key_setting is None:
        include_key_setting = N == 1
    if box.bob_extra and not include_key_setting:
        box = _restrict_to_block(box)
        entries, N = _box_entries(box)
    if method == "auto":
        method = "direct" if N == 1 else "reduced"

    if method == "reduced":
        value, tri, result = _reduced_guessing(entries, N, x_target)
        return value, TripartiteBox(tri[..., None], N), result
    problem, shape = build_guessing_lp(box, x_target)
    result = solve_lp(problem)
    if not result.ok:
        # the extension with an ignorant E is always feasible and the objective is bounded
        raise RuntimeError(f"guessing LP ended with status {result.status}")
    witness = TripartiteBox(result.solution.reshape(shape)[..., None], N)
    return result.optimum, witness, result


def tripartite_from_mixture(boxes, weights) -> TripartiteBox:
    """Extension in which E learns which component of a mixture was prepared."""
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or len(boxes) != weights.size:
        raise ValueError("one weight per box")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be a probability vector")
    arrays = [_box_entries(b) for b in boxes]
    N = arrays[0][1]
    if any(n != N or a.shape != arrays[0][0].shape for a, n in arrays):
        raise ValueError("boxes must share shape")
    stacked = np.stack([w * a for w, (a, _) in zip(weights, arrays)], axis=2 * N)
    return TripartiteBox(stacked[..., None], N)


def beta_monotonicity_check(M: int, n: int) -> float:
    """``max`` over sign patterns and components of ``(x)beta_{a_i} - beta^{(x)n}``."""
    if not 1 <= n <= 3:
        raise ValueError("n must lie in 1..3")
    if not 2 <= M <= 4:
        raise ValueError("M must lie in 2..4")
    top = tensor([beta(M)] * n)
    worst = -np.inf
    for pattern in itertools.product((0, 1), repeat=n):
        worst = max(worst, float(np.max(tensor([beta_a(M, a) for a in pattern]) - top)))
    return worst


def monogamy_slack(box, x_target=0) -> dict:
    """LP guessing value against the BC product bound."""
    value, _, _ = max_guessing(box, x_target)
    bc = bc_product_value(box)
    return {"value": value, "bc": bc, "slack": bc - value}
