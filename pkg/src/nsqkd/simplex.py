"""Dense two-phase simplex for ``max c.v  s.t.  A v = b,  v >= 0``.

Bland's smallest-index rule picks both the entering and the leaving variable,
so the method cannot cycle. The optional ``"dantzig"`` rule enters the column
with the largest reduced cost and falls back to Bland's rule after a run of
degenerate pivots. Every optimum is certified before it is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9
COST_TOL = 1e-9
RULES = ("bland", "dantzig")
# consecutive degenerate pivots before the dantzig rule hands over to bland
STALL_LIMIT = 50


@dataclass
class LpProblem:
    """``max objective.v`` subject to ``A_eq v = b_eq`` and ``v >= 0``."""

    objective: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray

    def __post_init__(self) -> None:
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
        self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
        n = self.objective.size
        if self.A_eq.size == 0:
            self.A_eq = np.zeros((0, n))
        if self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError(
                f"inconsistent dimensions: A_eq {self.A_eq.shape}, b_eq {self.b_eq.size}, objective {n}"
            )

    @property
    def n_vars(self) -> int:
        return self.objective.size


@dataclass
class LpResult:
    status: str  # "optimal", "infeasible", "unbounded", "iteration_limit"
    optimum: float
    solution: np.ndarray | None
    iterations: int = 0
    residual: float = np.nan
    max_reduced_cost: float = np.nan
    basis: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    """Rows ``[B^-1 A | B^-1 rhs]`` plus a last row of reduced costs.

    ``rhs`` has one column per right-hand side; the first drives the ratio
    test and the others are carried along unchanged in meaning.
    """

    def __init__(self, T: np.ndarray, basis: list[int], n_rhs: int):
        self.T = T
        self.basis = basis
        self.n_rhs = n_rhs

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    @property
    def n_cols(self) -> int:
        return self.T.shape[1] - self.n_rhs

    def body(self) -> np.ndarray:
        return self.T[: self.m, : self.n_cols]

    def rhs(self, k: int = 0) -> np.ndarray:
        return self.T[: self.m, self.n_cols + k]

    def set_cost(self, cost: np.ndarray) -> None:
        """Reset the reduced-cost row from scratch for objective ``cost``."""
        cb = cost[self.basis]
        self.T[-1, : self.n_cols] = cost - cb @ self.body()
        self.T[-1, self.basis] = 0.0
        self.T[-1, self.n_cols :] = -(cb @ self.T[: self.m, self.n_cols :])

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j


# pivots between full recomputations of the reduced-cost row
REFRESH_EVERY = 200


def _run(
    tab: _Tableau, cost: np.ndarray, allowed: np.ndarray, max_iter: int, rule: str = "bland"
) -> tuple[str, int]:
    """Maximize ``cost.v`` over the current tableau, entering only ``allowed`` columns."""
    tab.set_cost(cost)
    m = tab.m
    it = 0
    stall = 0
    basis_arr = np.asarray(tab.basis)
    while it < max_iter:
        reduced = tab.T[-1, : tab.n_cols]
        cand = np.flatnonzero((reduced > COST_TOL) & allowed)
        if cand.size == 0:
            # confirm against a fresh row before declaring optimality
            tab.set_cost(cost)
            reduced = tab.T[-1, : tab.n_cols]
            cand = np.flatnonzero((reduced > COST_TOL) & allowed)
            if cand.size == 0:
                return "optimal", it
        if rule == "dantzig" and stall < STALL_LIMIT:
            j = int(cand[np.argmax(reduced[cand])])
        else:
            j = int(cand[0])
        col = tab.T[:m, j]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            return "unbounded", it
        ratios = tab.rhs()[pos] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        # Bland: among tied rows leave the smallest-index basic variable
        r = int(ties[np.argmin(basis_arr[ties])])
        stall = stall + 1 if best <= 1e-12 else 0
        tab.pivot(r, j)
        basis_arr[r] = j
        it += 1
        if it % REFRESH_EVERY == 0:
            tab.set_cost(cost)
    return "iteration_limit", it


def _independent_rows(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Drop linearly dependent equality rows; the flag is False if they were inconsistent."""
    if A.shape[0] == 0:
        return A, b, True
    _, R, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * max(1.0, diag.max(initial=0.0))))
    keep = np.sort(piv[:rank])
    A_red, b_red = A[keep], b[keep]
    if rank < A.shape[0]:
        # dependent rows are R11^-1 R12 combinations of the kept ones; b must follow
        coef = scipy.linalg.solve_triangular(R[:rank, :rank], R[:rank, rank:])
        implied = coef.T @ b[piv[:rank]]
        if np.max(np.abs(implied - b[piv[rank:]])) > FEAS_TOL * max(1.0, np.abs(b).max()):
            return A_red, b_red, False
    return A_red, b_red, True


def solve_lp(
    problem: LpProblem, max_iter: int = 50_000, rule: str = "bland", perturb: float = 0.0, seed: int = 0
) -> LpResult:
    """Solve ``problem``.

    Parameters
    ----------
    problem : LpProblem
    max_iter : int
        Pivot budget over both phases.
    rule : {"bland", "dantzig"}
        Entering-variable rule; the leaving variable always follows Bland.
    perturb : float
        If positive, pivoting follows the right-hand side ``b + perturb * A r``
        with ``r`` uniform on ``[0.5, 1]``. That problem is feasible whenever
        the original one is (shift any feasible ``v`` by ``perturb * r``) and is
        generically nondegenerate, which removes stalling. The final basis is
        then certified against the original ``b``; if that fails the solve is
        repeated without perturbation.
    seed : int
        Seeds ``r``.
    """
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    if perturb < 0:
        raise ValueError("perturb must be non-negative")
    c = problem.objective
    A, b, consistent = _independent_rows(problem.A_eq, problem.b_eq)
    if not consistent:
        return LpResult("infeasible", np.nan, None, 0)
    A = A.copy()
    b = b.copy()
    m, n = A.shape
    if perturb > 0:
        r = np.random.default_rng(seed).uniform(0.5, 1.0, n)
        b_piv = b + perturb * max(1.0, np.abs(b).max(initial=0.0)) * (A @ r)
    else:
        b_piv = b.copy()
    neg = b_piv < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    b_piv = np.where(neg, -b_piv, b_piv)

    # phase 1: artificials n..n+m-1 form the starting basis
    T = np.zeros((m + 1, n + m + 2))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -2] = b_piv
    T[:m, -1] = b
    tab = _Tableau(T, list(range(n, n + m)), 2)
    cost1 = np.concatenate([np.zeros(n), -np.ones(m)])
    allowed = np.ones(n + m, dtype=bool)
    status, it1 = _run(tab, cost1, allowed, max_iter, rule)
    if status == "iteration_limit":
        return LpResult(status, np.nan, None, it1)
    art = np.asarray(tab.basis) >= n
    infeas = float(np.sum(tab.rhs(0)[art]))
    if infeas > FEAS_TOL * max(1.0, np.abs(b_piv).max(initial=0.0)):
        if perturb > 0:
            return solve_lp(problem, max_iter, rule)
        return LpResult("infeasible", np.nan, None, it1)

    # drive artificials out of the basis; rows where that is impossible are redundant
    keep = []
    for r_ in range(m):
        if tab.basis[r_] < n:
            keep.append(r_)
            continue
        row = tab.T[r_, :n]
        j = np.flatnonzero(np.abs(row) > 1e-9)
        if j.size:
            tab.pivot(r_, int(j[0]))
            keep.append(r_)
    T2 = np.vstack([np.hstack([tab.T[keep, :n], tab.T[keep, -2:]]), np.zeros((1, n + 2))])
    tab = _Tableau(T2, [tab.basis[r_] for r_ in keep], 2)

    status, it2 = _run(tab, c, np.ones(n, dtype=bool), max_iter - it1, rule)
    iters = it1 + it2
    if status != "optimal":
        return LpResult(status, np.nan if status != "unbounded" else np.inf, None, iters)

    v = np.zeros(n)
    v[tab.basis] = tab.rhs(1)
    v[np.abs(v) < 1e-15] = 0.0
    if perturb > 0 and v.min(initial=0.0) < -FEAS_TOL:
        # the perturbed optimum is not a feasible basis of the original problem
        return solve_lp(problem, max_iter, rule)
    v[(v < 0) & (v >= -FEAS_TOL)] = 0.0
    residual = float(np.max(np.abs(problem.A_eq @ v - problem.b_eq), initial=0.0))
    tab.set_cost(c)
    max_rc = float(tab.T[-1, :n].max(initial=0.0))
    if residual > FEAS_TOL or max_rc > COST_TOL:
        raise ArithmeticError(f"simplex certificate failed: residual {residual:.2e}, reduced cost {max_rc:.2e}")
    return LpResult("optimal", float(c @ v), v, iters, residual, max_rc, list(tab.basis))
