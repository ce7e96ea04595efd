"""Standard-form linear programs for the selector and their solution.

Every LP here has nonnegative variables ``z`` laid out as
``(gamma+, gamma-, eta+, eta-)``. Two backends are available: the
bundled revised simplex (``"simplex"``) and HiGHS through
:func:`scipy.optimize.linprog` (``"highs"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .design import DesignSet
from .diffops import TransformA
from .simplex import revised_simplex

__all__ = [
    "LinearProgram",
    "LpSolution",
    "LPError",
    "build_gds_lp",
    "solve_lp",
    "primal_residual",
    "export_lp",
    "read_lp",
    "SOLVERS",
]

SOLVERS = ("highs", "simplex")
_STATUS = {0: "optimal", 1: "iteration_limit", 2: "infeasible",
           3: "unbounded", 4: "numerical"}


class LPError(RuntimeError):
    """An LP did not reach an optimal solution."""

    def __init__(self, status: str, msg: str = ""):
        self.status = status
        super().__init__(msg or f"linear program status: {status}")


@dataclass(frozen=True)
class LinearProgram:
    """``min c'z  s.t.  A_eq z = b_eq,  A_ub z <= b_ub,  z >= 0``."""

    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    var_layout: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.c.shape[0]
        if self.A_eq.shape[1] != n or self.A_ub.shape[1] != n:
            raise ValueError("constraint blocks must have len(c) columns")
        if self.A_eq.shape[0] != self.b_eq.shape[0]:
            raise ValueError("A_eq and b_eq disagree in row count")
        if self.A_ub.shape[0] != self.b_ub.shape[0]:
            raise ValueError("A_ub and b_ub disagree in row count")
        if not np.all(np.isfinite(self.b_ub)):
            raise ValueError("inequality right-hand sides must be finite")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    def part(self, z, name: str) -> np.ndarray:
        return z[self.var_layout[name]]


@dataclass(frozen=True)
class LpSolution:
    z: np.ndarray | None
    objective: float
    status: str
    primal_residual: float
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _layout(L, p):
    return {"gamma_plus": slice(0, L), "gamma_minus": slice(L, 2 * L),
            "eta_plus": slice(2 * L, 2 * L + p),
            "eta_minus": slice(2 * L + p, 2 * L + 2 * p)}


def build_gds_lp(ds: DesignSet, A: TransformA, lam: float,
                 zero_rows=None) -> LinearProgram:
    """LP form of the selector at tuning level ``lam``.

    Equality rows tie ``gamma+ - gamma- = A (eta+ - eta-)``; inequality
    rows bound the scaled residual correlations
    ``(1/n) D_j^-1 Xc_j^T (yc - Xc eta)`` to ``[-lam, lam]`` for every
    column with nonzero n-norm. The rows are the unscaled ones divided
    by ``n D_j``, which leaves the feasible set unchanged. Optional
    ``zero_rows`` (a ``k x p`` matrix ``Z``) add ``Z eta = 0``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    Av = A.values
    L, p = Av.shape
    if ds.p != p:
        raise ValueError(f"design has {ds.p} columns but A has {p}")
    n = ds.n
    r = ds.retained
    scale = 1.0 / (n * ds.D[r])
    G = (ds.Xc[:, r].T @ ds.Xc) * scale[:, None]
    g = (ds.Xc[:, r].T @ ds.yc) * scale

    c = np.concatenate([np.ones(2 * L), np.zeros(2 * p)])
    I_L = sp.identity(L, format="csr")
    As = sp.csr_matrix(Av)
    eq_blocks = [[-I_L, I_L, As, -As]]
    b_eq = [np.zeros(L)]
    if zero_rows is not None:
        Z = sp.csr_matrix(np.atleast_2d(np.asarray(zero_rows, dtype=float)))
        if Z.shape[0]:
            if Z.shape[1] != p:
                raise ValueError("zero_rows must have p columns")
            eq_blocks.append([sp.csr_matrix((Z.shape[0], L)),
                              sp.csr_matrix((Z.shape[0], L)), Z, -Z])
            b_eq.append(np.zeros(Z.shape[0]))
    A_eq = sp.bmat(eq_blocks, format="csr")

    Gs = sp.csr_matrix(G)
    k = len(r)
    zero = sp.csr_matrix((k, L))
    A_ub = sp.bmat([[zero, zero, Gs, -Gs], [zero, zero, -Gs, Gs]], format="csr")
    b_ub = np.concatenate([lam + g, lam - g])
    return LinearProgram(c, A_eq, np.concatenate(b_eq), A_ub, b_ub, _layout(L, p))


def primal_residual(lp: LinearProgram, z) -> float:
    """Largest violation of any constraint or bound at ``z``."""
    z = np.asarray(z, dtype=float)
    parts = [0.0]
    if lp.A_eq.shape[0]:
        parts.append(np.abs(lp.A_eq @ z - lp.b_eq).max())
    if lp.A_ub.shape[0]:
        parts.append(np.max(lp.A_ub @ z - lp.b_ub))
    parts.append(np.max(-z) if z.size else 0.0)
    return float(max(parts))


_HIGHS_ATTEMPTS = (("highs-ds", True), ("highs-ipm", True), ("highs-ds", False))


def _highs(lp, feas_tol, opt_tol, max_iter):
    """Dual simplex first; on a numerical breakdown retry with interior
    point, then without presolve."""
    has_ub, has_eq = lp.A_ub.shape[0] > 0, lp.A_eq.shape[0] > 0
    for method, presolve in _HIGHS_ATTEMPTS:
        options = {"primal_feasibility_tolerance": feas_tol,
                   "dual_feasibility_tolerance": opt_tol, "presolve": presolve}
        if max_iter is not None:
            options["maxiter"] = max_iter
        res = linprog(lp.c, A_ub=lp.A_ub if has_ub else None,
                      b_ub=lp.b_ub if has_ub else None,
                      A_eq=lp.A_eq if has_eq else None,
                      b_eq=lp.b_eq if has_eq else None,
                      bounds=(0, None), method=method, options=options)
        status = _STATUS.get(res.status, "numerical")
        if status != "numerical":
            break
    z = res.x if status == "optimal" else None
    return status, z, int(getattr(res, "nit", 0) or 0), f"{method}: {res.message}"


def solve_lp(lp: LinearProgram, feas_tol: float = 1e-7, opt_tol: float = 1e-7,
             method: str = "highs", max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` with the chosen backend.

    The returned status is ``optimal``, ``infeasible``, ``unbounded``,
    ``iteration_limit`` or, for HiGHS only, ``numerical``. Both backends
    are deterministic for identical input.
    """
    if method == "highs":
        status, z, nit, msg = _highs(lp, feas_tol, opt_tol, max_iter)
    elif method == "simplex":
        res = revised_simplex(lp.c, lp.A_eq.toarray(), lp.b_eq,
                              lp.A_ub.toarray(), lp.b_ub,
                              feas_tol=feas_tol, tol=min(opt_tol, 1e-9),
                              max_iter=max_iter)
        status, z, nit, msg = res.status, res.x, res.iterations, ""
    else:
        raise ValueError(f"unknown LP method {method!r}; choose from {SOLVERS}")

    if z is None:
        obj = -np.inf if status == "unbounded" else np.nan
        return LpSolution(None, obj, status, np.inf, nit, msg)
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    return LpSolution(z, float(lp.c @ z), status, primal_residual(lp, z), nit, msg)


def _write_vec(fh, name, v):
    fh.write(f"{name} {len(v)}\n")
    for x in v:
        fh.write(f"{float(x)!r}\n")


def _write_mat(fh, name, M):
    M = sp.coo_matrix(M)
    order = np.lexsort((M.col, M.row))
    fh.write(f"{name} {M.shape[0]} {M.shape[1]} {M.nnz}\n")
    for i, j, v in zip(M.row[order], M.col[order], M.data[order]):
        fh.write(f"{i} {j} {float(v)!r}\n")


def export_lp(lp: LinearProgram, fh) -> None:
    """Write ``lp`` as a plain-text standard-form dump.

    Layout (0-based indices, shortest round-trip floats)::

        # imagedantzig-lp 1
        layout <name> <start> <stop>      (one line per variable block)
        c <n>                              followed by n values
        A_eq <rows> <cols> <nnz>           followed by "i j value" triplets
        b_eq <rows>                        followed by values
        A_ub <rows> <cols> <nnz>
        b_ub <rows>

    Semantics: minimize ``c'z`` subject to ``A_eq z = b_eq``,
    ``A_ub z <= b_ub`` and ``z >= 0``.
    """
    fh.write("# imagedantzig-lp 1\n")
    for name, sl in lp.var_layout.items():
        fh.write(f"layout {name} {sl.start} {sl.stop}\n")
    _write_vec(fh, "c", lp.c)
    _write_mat(fh, "A_eq", lp.A_eq)
    _write_vec(fh, "b_eq", lp.b_eq)
    _write_mat(fh, "A_ub", lp.A_ub)
    _write_vec(fh, "b_ub", lp.b_ub)


def read_lp(fh) -> LinearProgram:
    """Inverse of :func:`export_lp`."""
    lines = iter(line.strip() for line in fh if line.strip())
    layout, vecs, mats = {}, {}, {}
    for line in lines:
        if line.startswith("#"):
            continue
        head = line.split()
        if head[0] == "layout":
            layout[head[1]] = slice(int(head[2]), int(head[3]))
        elif head[0] in ("c", "b_eq", "b_ub"):
            k = int(head[1])
            vecs[head[0]] = np.array([float(next(lines)) for _ in range(k)])
        elif head[0] in ("A_eq", "A_ub"):
            rows, cols, nnz = map(int, head[1:])
            trip = [next(lines).split() for _ in range(nnz)]
            i = np.array([int(t[0]) for t in trip], dtype=int)
            j = np.array([int(t[1]) for t in trip], dtype=int)
            v = np.array([float(t[2]) for t in trip])
            mats[head[0]] = sp.csr_matrix((v, (i, j)), shape=(rows, cols))
        else:
            raise ValueError(f"unrecognized LP dump line: {line!r}")
    return LinearProgram(vecs["c"], mats["A_eq"], vecs["b_eq"], mats["A_ub"],
                         vecs["b_ub"], layout)
