"""Picard and Newton fixed-point maps for the discrete Boussinesq system.

Iterates are :class:`State` objects; for acceleration they are packed into a
flat vector ``[u, theta, p]`` and measured in the B-norm

    ||(v, w)||_B^2 = nu ||grad v||^2 + kappa ||grad w||^2,

which ignores the pressure block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Assembler, ProblemConfig
from .fespace import TAYLOR_HOOD, BoundaryConditions, ElementFamily, QuadratureRule, build_dofmap
from .linsolve import DEFAULT_TOL, LinearSolverError, LinearSystem, augment_with_constraints, solve
from .meshgen import Mesh


@dataclass
class State:
    u: np.ndarray
    p: np.ndarray
    theta: np.ndarray

    def copy(self) -> "State":
        return State(self.u.copy(), self.p.copy(), self.theta.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.theta)))


class BInnerProduct:
    """``<x, y>_B = nu u_x^T K u_y + kappa theta_x^T K theta_y`` on packed vectors."""

    def __init__(self, stiffness: sp.spmatrix, nu: float, kappa: float):
        self.k = sp.csr_matrix(stiffness)
        self.nu = nu
        self.kappa = kappa
        self.n2 = self.k.shape[0]

    def _blocks(self, x):
        n2 = self.n2
        return x[:n2], x[n2 : 2 * n2], x[2 * n2 : 3 * n2]

    def __call__(self, x: np.ndarray, y: np.ndarray) -> float:
        ux, vx, tx = self._blocks(x)
        uy, vy, ty = self._blocks(y)
        k = self.k
        return float(self.nu * (ux @ (k @ uy) + vx @ (k @ vy)) + self.kappa * (tx @ (k @ ty)))

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(max(self(x, x), 0.0)))

    def state_norm(self, w: np.ndarray, z: np.ndarray) -> float:
        k = self.k
        n2 = self.n2
        val = self.nu * (w[:n2] @ (k @ w[:n2]) + w[n2:] @ (k @ w[n2:])) + self.kappa * (z @ (k @ z))
        return float(np.sqrt(max(val, 0.0)))


@dataclass
class Residual:
    w: np.ndarray
    z: np.ndarray
    dp: np.ndarray
    norm: float


@dataclass
class TheoryDiagnostics:
    K1: float
    K2: float
    eta: float
    uniqueness_lhs: tuple
    uniqueness_ok: tuple
    strong_lhs: tuple
    strong_ok: tuple
    sigma_history: list = field(default_factory=list)


def theory_diagnostics(config: ProblemConfig, C_P: float, M: float, f_norm: float, gamma_norm: float,
                       sigma_history=None) -> TheoryDiagnostics:
    """A-priori bounds and small-data checks from caller-supplied constant estimates.

    ``f_norm`` and ``gamma_norm`` are estimates of the H^{-1} norms of the
    sources; ``C_P`` is the Poincare constant and ``M`` the trilinear bound.
    """
    nu, kappa, Ri = config.nu, config.kappa, config.Ri
    eta = min(nu, kappa)
    K1 = Ri * C_P**2 / (nu * kappa) * gamma_norm + f_norm / nu
    K2 = gamma_norm / kappa
    u1 = M / nu * (2.0 * K1 + M * K2**2 / kappa)
    u2 = Ri**2 * C_P**4 / (nu * kappa)
    s1 = M / eta**2 * (2.0 * (Ri * C_P**2 * gamma_norm / kappa + f_norm) + M * gamma_norm**2 / kappa**2)
    s2 = Ri * C_P**2 / eta
    return TheoryDiagnostics(
        K1=K1, K2=K2, eta=eta,
        uniqueness_lhs=(u1, u2), uniqueness_ok=(u1 < 1.0, u2 < 1.0),
        strong_lhs=(s1, s2), strong_ok=(s1 < 1.0, s2 < 1.0),
        sigma_history=list(sigma_history or []),
    )


def sigma_k(w_next: np.ndarray, w: np.ndarray, x: np.ndarray, x_prev: np.ndarray, inner) -> Optional[float]:
    """``||w_{k+1} - w_k|| / ||x_k - x_{k-1}||``; None when the iterates coincide."""
    den = np.sqrt(max(inner(x - x_prev, x - x_prev), 0.0))
    if den == 0.0:
        return None
    num = np.sqrt(max(inner(w_next - w, w_next - w), 0.0))
    return float(num / den)


class BoussinesqProblem:
    """Discrete steady Boussinesq problem on one mesh.

    Parameters
    ----------
    mesh : Mesh
    config : ProblemConfig
    family : ElementFamily
    bc : BoundaryConditions, optional
        Defaults to the differentially heated cavity.
    solver_tol : float
        Relative residual required of every linear solve.
    """

    def __init__(self, mesh: Mesh, config: ProblemConfig, family: ElementFamily = TAYLOR_HOOD,
                 bc: BoundaryConditions | None = None, quad: QuadratureRule | None = None,
                 solver_tol: float = DEFAULT_TOL):
        self.mesh = mesh
        self.config = config
        self.dofs = build_dofmap(mesh, family, bc)
        self.asm = Assembler(self.dofs, quad)
        self.solver_tol = solver_tol
        d = self.dofs
        self.nv, self.np_, self.nt = d.n_velocity, d.n_pressure, d.n_temperature
        self.vfree = np.flatnonzero(~d.velocity_dirichlet)
        self.vfix = np.flatnonzero(d.velocity_dirichlet)
        self.tfree = np.flatnonzero(~d.temperature_dirichlet)
        self.tfix = np.flatnonzero(d.temperature_dirichlet)
        self.inner = BInnerProduct(self.asm.stiffness, config.nu, config.kappa)
        self.f_load = self.asm.velocity_load(config.f)
        self.gamma_load = self.asm.scalar_load(config.gamma)
        self.buoyancy = self.asm.assemble_buoyancy(config.Ri)
        self.diff_v = self.asm.assemble_diffusion("velocity", config.nu)
        self.diff_t = self.asm.assemble_diffusion("temperature", config.kappa)

    # -- packing -------------------------------------------------------------
    @property
    def size(self) -> int:
        return self.nv + self.nt + self.np_

    def pack(self, s: State) -> np.ndarray:
        return np.concatenate([s.u, s.theta, s.p])

    def unpack(self, x: np.ndarray) -> State:
        nv, nt = self.nv, self.nt
        return State(x[:nv].copy(), x[nv + nt :].copy(), x[nv : nv + nt].copy())

    def initial_state(self) -> State:
        """Zero velocity and pressure; temperature zero except its Dirichlet data."""
        theta = np.zeros(self.nt)
        theta[self.tfix] = self.dofs.temperature_values[self.tfix]
        return State(np.zeros(self.nv), np.zeros(self.np_), theta)

    def interpolate_state(self, u_func, theta_func, p_func=None) -> State:
        """Nodal interpolant of exact fields; ``u_func`` returns (ux, uy)."""
        x, y = self.dofs.node_coords.T
        ux, uy = u_func(x, y)
        u = np.concatenate([np.broadcast_to(ux, x.shape), np.broadcast_to(uy, x.shape)]).astype(float)
        theta = np.asarray(theta_func(x, y), dtype=float) * np.ones_like(x)
        p = np.zeros(self.np_)
        if p_func is not None:
            if self.dofs.family.discontinuous_pressure:
                pts = self.mesh.vertices[self.mesh.triangles].reshape(-1, 2)
            else:
                pts = self.mesh.vertices
            p = np.asarray(p_func(pts[:, 0], pts[:, 1]), dtype=float) * np.ones(len(pts))
        return State(u, p, theta)

    # -- linear stages -------------------------------------------------------
    def _solve(self, mat, rhs, stage):
        x, _ = solve(LinearSystem(mat, rhs, tol=self.solver_tol, label=stage))
        return x

    def solve_temperature(self, u_adv: np.ndarray) -> np.ndarray:
        """Transport solve ``b*(u_adv, theta, chi) + kappa (grad theta, grad chi) = (gamma, chi)``."""
        a = (self.diff_t + self.asm.assemble_convection(u_adv, "temperature")).tocsr()
        theta = np.zeros(self.nt)
        theta[self.tfix] = self.dofs.temperature_values[self.tfix]
        f, d = self.tfree, self.tfix
        rhs = self.gamma_load[f] - a[f][:, d] @ theta[d]
        theta[f] = self._solve(a[f][:, f], rhs, "temperature")
        return theta

    def solve_oseen(self, u_adv: np.ndarray, theta: np.ndarray):
        """Oseen solve with buoyancy load ``Ri <0, theta>``; returns (u, p)."""
        a = (self.diff_v + self.asm.assemble_convection(u_adv, "velocity")).tocsr()
        dmat = self.asm.divergence
        f, d = self.vfree, self.vfix
        u = np.zeros(self.nv)
        u[d] = self.dofs.velocity_values[d]
        rhs_u = self.f_load + self.buoyancy @ theta
        rhs_u = rhs_u[f] - a[f][:, d] @ u[d]
        rhs_p = dmat[:, d] @ u[d]
        dm = dmat[:, f]
        mat = sp.bmat([[a[f][:, f], -dm.T], [-dm, None]], format="csr")
        row = np.concatenate([np.zeros(len(f)), self.asm.pressure_mean])
        mat, rhs = augment_with_constraints(mat, np.concatenate([rhs_u, rhs_p]), row)
        sol = self._solve(mat, rhs, "momentum")
        u[f] = sol[: len(f)]
        p = sol[len(f) : len(f) + self.np_]
        return u, p

    # -- fixed-point maps ----------------------------------------------------
    def picard_apply(self, current: State) -> State:
        """One decoupled step: temperature with the lagged velocity, then Oseen."""
        theta = self.solve_temperature(current.u)
        u, p = self.solve_oseen(current.u, theta)
        return State(u, p, theta)

    def newton_apply(self, current: State) -> State:
        """One coupled Newton step for (u, p, theta)."""
        mat, rhs = self.asm.assemble_newton_blocks(current.u, current.theta, self.config)
        nv, np_ = self.nv, self.np_
        fixed_vals = np.zeros(self.nv + self.np_ + self.nt)
        fixed_vals[nv + np_ + self.tfix] = self.dofs.temperature_values[self.tfix]
        fixed_vals[self.vfix] = self.dofs.velocity_values[self.vfix]
        free = np.concatenate([self.vfree, nv + np.arange(np_), nv + np_ + self.tfree])
        fixed = np.concatenate([self.vfix, nv + np_ + self.tfix])
        mat = mat.tocsr()
        rows = mat[free]
        rhs_f = rhs[free] - rows[:, fixed] @ fixed_vals[fixed]
        row = np.zeros(len(free))
        nvf = len(self.vfree)
        row[nvf : nvf + np_] = self.asm.pressure_mean
        big, big_rhs = augment_with_constraints(rows[:, free], rhs_f, row)
        sol = self._solve(big, big_rhs, "newton")
        z = fixed_vals.copy()
        z[free] = sol[: len(free)]
        return State(z[:nv], z[nv : nv + np_], z[nv + np_ :])

    def picard_map(self, x: np.ndarray) -> np.ndarray:
        return self.pack(self.picard_apply(self.unpack(x)))

    def newton_map(self, x: np.ndarray) -> np.ndarray:
        return self.pack(self.newton_apply(self.unpack(x)))

    def residual(self, current: State, nxt: State) -> Residual:
        """Update step (w, z) = next - current, its B-norm, and the pressure change."""
        w = nxt.u - current.u
        z = nxt.theta - current.theta
        return Residual(w, z, nxt.p - current.p, self.inner.state_norm(w, z))

    # -- nonlinear residual of the discrete equations --------------------------
    @cached_property
    def _riesz_factors(self):
        kv = self.diff_v.tocsr()[self.vfree][:, self.vfree].tocsc()
        kt = self.diff_t.tocsr()[self.tfree][:, self.tfree].tocsc()
        return spla.splu(kv), spla.splu(kt)

    def equation_residual(self, s: State):
        """Momentum and energy residuals of the discrete equations on the free DOFs."""
        a_u = self.diff_v + self.asm.assemble_convection(s.u, "velocity")
        a_t = self.diff_t + self.asm.assemble_convection(s.u, "temperature")
        r_u = a_u @ s.u - self.asm.divergence.T @ s.p - self.buoyancy @ s.theta - self.f_load
        r_t = a_t @ s.theta - self.gamma_load
        return r_u[self.vfree], r_t[self.tfree]

    def fe_residual_norm(self, s: State) -> float:
        """B-norm of the Riesz representative of the discrete equation residual."""
        r_u, r_t = self.equation_residual(s)
        lu_v, lu_t = self._riesz_factors
        val = r_u @ lu_v.solve(r_u) + r_t @ lu_t.solve(r_t)
        return float(np.sqrt(max(val, 0.0)))

    def divergence_l2(self, s: State) -> float:
        """``||div u_h||`` in L^2 by quadrature."""
        g = self.asm.velocity_grad_at_qp(s.u)
        div = g[..., 0, 0] + g[..., 1, 1]
        return float(np.sqrt(np.sum(self.asm.cd.wdet * div**2)))


__all__ = [
    "BInnerProduct",
    "BoussinesqProblem",
    "LinearSolverError",
    "Residual",
    "State",
    "TheoryDiagnostics",
    "sigma_k",
    "theory_diagnostics",
]
