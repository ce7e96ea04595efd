"""Dense two-phase revised simplex with Bland's pivoting rule.

Solves ``min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0``.
The basis inverse is kept explicitly and updated by elementary row
operations, with a fresh inversion every ``refactor`` pivots. Entering
and leaving variables are chosen by lowest index, which rules out
cycling and makes the pivot sequence a pure function of the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SimplexResult", "revised_simplex"]


@dataclass
class SimplexResult:
    x: np.ndarray | None
    objective: float
    status: str
    iterations: int


class _Tableau:
    def __init__(self, A, b, basis, refactor):
        self.A = A
        self.b = b
        self.basis = np.array(basis)
        self.refactor = refactor
        self.since_refactor = 0
        self.reinvert()

    def reinvert(self):
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self.xB = self.Binv @ self.b
        self.since_refactor = 0

    def pivot(self, r, q, alpha):
        piv = alpha[r]
        self.Binv[r] /= piv
        self.xB[r] /= piv
        others = alpha.copy()
        others[r] = 0.0
        self.Binv -= np.outer(others, self.Binv[r])
        self.xB -= others * self.xB[r]
        self.basis[r] = q
        self.since_refactor += 1
        if self.since_refactor >= self.refactor:
            self.reinvert()


def _iterate(tab, cost, allowed, tol, max_iter, it):
    """Run Bland pivots until optimal. Returns (status, iterations)."""
    while True:
        if max_iter is not None and it >= max_iter:
            return "iteration_limit", it
        y = cost[tab.basis] @ tab.Binv
        d = cost - y @ tab.A
        d[tab.basis] = 0.0
        cand = np.flatnonzero((d < -tol) & allowed)
        if cand.size == 0:
            return "optimal", it
        q = cand[0]
        alpha = tab.Binv @ tab.A[:, q]

        # basic variables that must stay at zero (leftover artificials)
        pinned = ~allowed[tab.basis] & (np.abs(alpha) > tol)
        if pinned.any():
            r = np.flatnonzero(pinned)[np.argmin(tab.basis[pinned])]
        else:
            pos = np.flatnonzero(alpha > tol)
            if pos.size == 0:
                return "unbounded", it
            xb = np.maximum(tab.xB[pos], 0.0)
            ratios = xb / alpha[pos]
            best = ratios.min()
            ties = pos[ratios <= best + tol * max(1.0, best)]
            r = ties[np.argmin(tab.basis[ties])]
        tab.pivot(r, q, alpha)
        tab.xB[np.abs(tab.xB) < 1e-13] = 0.0
        it += 1


def revised_simplex(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, *,
                    tol: float = 1e-9, feas_tol: float = 1e-8,
                    max_iter: int | None = None,
                    refactor: int = 50) -> SimplexResult:
    """Solve a nonnegative-variable LP with the revised simplex method.

    Parameters
    ----------
    c : (n,) array
    A_eq, b_eq, A_ub, b_ub : arrays or None
        Constraint blocks; either may be omitted.
    tol : float
        Pivot and reduced-cost tolerance.
    feas_tol : float
        Phase-one objective above which the problem is declared
        infeasible.
    max_iter : int, optional
        Total pivot budget across both phases.
    refactor : int
        Pivots between explicit re-inversions of the basis.

    Returns
    -------
    SimplexResult
        ``status`` is one of ``optimal``, ``infeasible``, ``unbounded``
        or ``iteration_limit``.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float).ravel()
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float).ravel()
    if A_eq.shape[1] != n or A_ub.shape[1] != n:
        raise ValueError("constraint matrices must have len(c) columns")
    m_e, m_u = A_eq.shape[0], A_ub.shape[0]
    m = m_e + m_u

    # standard form with one slack per inequality row
    A = np.zeros((m, n + m_u))
    A[:m_e, :n] = A_eq
    A[m_e:, :n] = A_ub
    A[m_e:, n:] = np.eye(m_u)
    b = np.concatenate([b_eq, b_ub])
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1

    basis = np.empty(m, dtype=int)
    need_art = []
    for i in range(m):
        if i >= m_e and not flip[i]:
            basis[i] = n + (i - m_e)
        else:
            need_art.append(i)
    n_struct = n + m_u
    n_art = len(need_art)
    if n_art:
        art = np.zeros((m, n_art))
        art[need_art, np.arange(n_art)] = 1.0
        A = np.hstack([A, art])
        basis[need_art] = n_struct + np.arange(n_art)
    n_tot = A.shape[1]

    if m == 0:
        if np.any(c < -tol):
            return SimplexResult(None, -np.inf, "unbounded", 0)
        return SimplexResult(np.zeros(n), 0.0, "optimal", 0)

    tab = _Tableau(A, b, basis, refactor)
    it = 0
    if n_art:
        cost1 = np.zeros(n_tot)
        cost1[n_struct:] = 1.0
        allowed = np.ones(n_tot, dtype=bool)
        status, it = _iterate(tab, cost1, allowed, tol, max_iter, it)
        if status == "iteration_limit":
            return SimplexResult(None, np.nan, status, it)
        tab.reinvert()
        if cost1[tab.basis] @ tab.xB > feas_tol * max(1.0, np.abs(b).max()):
            return SimplexResult(None, np.nan, "infeasible", it)
        # drive remaining artificials out where a structural pivot exists
        for r in np.flatnonzero(tab.basis >= n_struct):
            row = tab.Binv[r] @ A[:, :n_struct]
            row[tab.basis[tab.basis < n_struct]] = 0.0
            cols = np.flatnonzero(np.abs(row) > 1e-7)
            if cols.size:
                q = cols[0]
                tab.pivot(r, q, tab.Binv @ A[:, q])
        tab.reinvert()

    cost2 = np.zeros(n_tot)
    cost2[:n] = c
    allowed = np.zeros(n_tot, dtype=bool)
    allowed[:n_struct] = True
    status, it = _iterate(tab, cost2, allowed, tol, max_iter, it)
    if status != "optimal":
        return SimplexResult(None, np.nan if status != "unbounded" else -np.inf,
                             status, it)
    tab.reinvert()
    x = np.zeros(n_tot)
    x[tab.basis] = np.maximum(tab.xB, 0.0)
    return SimplexResult(x[:n], float(c @ x[:n]), "optimal", it)
