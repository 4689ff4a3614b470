"""Sparse linear solves with residual checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_TOL = 1e-12


class LinearSolverError(RuntimeError):
    """Raised when a solve fails or misses its residual tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), stage: str | None = None):
        super().__init__(message if stage is None else f"[{stage}] {message}")
        self.residual = residual
        self.stage = stage


@dataclass
class LinearSystem:
    operator: sp.spmatrix
    rhs: np.ndarray
    tol: float = DEFAULT_TOL
    method: str = "direct"
    max_iter: int = 2000
    label: str = ""


@dataclass
class SolveReport:
    residual: float
    method: str
    refinements: int = 0


def augment_with_constraints(operator: sp.spmatrix, rhs: np.ndarray, rows: np.ndarray, values=None):
    """Border ``operator`` with constraint rows ``rows @ x = values``.

    Returns the symmetric bordered matrix ``[[A, C^T], [C, 0]]`` and the
    extended right-hand side; the multipliers are the trailing unknowns.
    """
    c = sp.csr_matrix(np.atleast_2d(rows))
    k = c.shape[0]
    values = np.zeros(k) if values is None else np.atleast_1d(values)
    mat = sp.bmat([[operator, c.T], [c, None]], format="csc")
    return mat, np.concatenate([rhs, values])


def _relative_residual(a, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(a @ x - b)
    return r / nb if nb > 0 else r


def solve(system: LinearSystem):
    """Solve ``system`` and check ``||Ax - b|| / ||b|| <= tol``.

    The direct method is a sparse LU with up to two steps of iterative
    refinement; "gmres" uses ILU-preconditioned GMRES.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    a = sp.csc_matrix(system.operator)
    b = np.asarray(system.rhs, dtype=float)
    if a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
        raise LinearSolverError(f"dimension mismatch: operator {a.shape}, rhs {b.shape}", stage=system.label or None)
    if not np.all(np.isfinite(b)):
        raise LinearSolverError("non-finite right-hand side", stage=system.label or None)
    if not np.any(b):
        return np.zeros_like(b), SolveReport(0.0, system.method)

    refinements = 0
    if system.method == "direct":
        try:
            lu = spla.splu(a)
        except RuntimeError as exc:
            raise LinearSolverError(f"factorization failed: {exc}", stage=system.label or None) from exc
        x = lu.solve(b)
        res = _relative_residual(a, x, b)
        while res > system.tol and refinements < 2 and np.isfinite(res):
            x = x + lu.solve(b - a @ x)
            res = _relative_residual(a, x, b)
            refinements += 1
    elif system.method == "gmres":
        ilu = spla.spilu(a, drop_tol=1e-5, fill_factor=20)
        prec = spla.LinearOperator(a.shape, ilu.solve)
        x, _ = spla.gmres(a, b, M=prec, rtol=system.tol, atol=0.0, restart=200, maxiter=system.max_iter)
        res = _relative_residual(a, x, b)
    else:
        raise ValueError(f"unknown method {system.method!r}")

    if not np.isfinite(res) or res > system.tol:
        raise LinearSolverError(
            f"relative residual {res:.3e} exceeds tolerance {system.tol:.1e}", residual=res, stage=system.label or None
        )
    return x, SolveReport(res, system.method, refinements)
