"""Sparse operators for the steady Boussinesq weak forms.

All operators act on full coefficient vectors (Dirichlet DOFs included);
boundary elimination happens at solve time. Convection is always assembled
in the skew-symmetrized form

    b(a, v, w) = 1/2 ((a . grad v, w) - (a . grad w, v)),

so every convection matrix is exactly antisymmetric.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .fespace import CellData, DofMap, QuadratureRule, cell_data


@dataclass(frozen=True)
class ProblemConfig:
    """Physical parameters: nu = 1/Re, kappa = 1/(Re Pr), Richardson number Ri.

    ``f(x, y)`` returns the two momentum forcing components and ``gamma(x, y)``
    the thermal source; ``None`` means zero.
    """

    nu: float = 0.01
    kappa: float = 0.01
    Ri: float = 1.0
    f: Optional[Callable] = None
    gamma: Optional[Callable] = None

    def __post_init__(self):
        if not self.nu > 0 or not self.kappa > 0:
            raise ValueError("nu and kappa must be positive")
        if not self.Ri >= 0:
            raise ValueError("Ri must be non-negative")

    @property
    def Re(self) -> float:
        return 1.0 / self.nu

    @property
    def Pr(self) -> float:
        return self.nu / self.kappa

    @property
    def Ra(self) -> float:
        return self.Ri * self.Re**2 * self.Pr

    @classmethod
    def from_rayleigh(cls, Ra: float, nu: float = 0.01, kappa: float = 0.01, **kw) -> "ProblemConfig":
        return cls(nu=nu, kappa=kappa, Ri=Ra * nu * kappa, **kw)


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    """Sum (nt, a, b) element matrices into a CSR matrix."""
    nt, a, b = local.shape
    r = np.broadcast_to(rows[:, :, None], (nt, a, b)).ravel()
    c = np.broadcast_to(cols[:, None, :], (nt, a, b)).ravel()
    mat = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    mat.sum_duplicates()
    return mat


class Assembler:
    """Assembles operators for one mesh and element family."""

    def __init__(self, dofs: DofMap, quad: QuadratureRule | None = None):
        self.dofs = dofs
        self.cd: CellData = cell_data(dofs, quad)
        self.n2 = dofs.n_scalar
        self.nv = dofs.n_velocity
        self.np_ = dofs.n_pressure
        self.cell_v = dofs.cell_velocity()

    # -- evaluation helpers ------------------------------------------------
    def scalar_at_qp(self, coeffs: np.ndarray) -> np.ndarray:
        """(nt, nq) values of a P2 field."""
        return np.einsum("qj,tj->tq", self.cd.phi2, coeffs[self.dofs.cell_p2])

    def scalar_grad_at_qp(self, coeffs: np.ndarray) -> np.ndarray:
        """(nt, nq, 2) gradients of a P2 field."""
        return np.einsum("tqjk,tj->tqk", self.cd.dphi2, coeffs[self.dofs.cell_p2])

    def velocity_at_qp(self, u: np.ndarray) -> np.ndarray:
        """(nt, nq, 2) values of a velocity field."""
        return np.stack([self.scalar_at_qp(u[: self.n2]), self.scalar_at_qp(u[self.n2 :])], axis=2)

    def velocity_grad_at_qp(self, u: np.ndarray) -> np.ndarray:
        """(nt, nq, 2, 2) with [..., c, d] = d u_c / d x_d."""
        return np.stack([self.scalar_grad_at_qp(u[: self.n2]), self.scalar_grad_at_qp(u[self.n2 :])], axis=2)

    def _p2_matrix(self, local):
        cells = self.dofs.cell_p2
        return _scatter(local, cells, cells, (self.n2, self.n2))

    def _vector_blockdiag(self, scalar: sp.spmatrix) -> sp.csr_matrix:
        return sp.block_diag([scalar, scalar], format="csr")

    # -- static operators --------------------------------------------------
    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Scalar P2 stiffness (grad phi_j, grad phi_i)."""
        cd = self.cd
        local = np.einsum("tq,tqik,tqjk->tij", cd.wdet, cd.dphi2, cd.dphi2)
        return self._p2_matrix(local)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        """Scalar P2 mass (phi_j, phi_i)."""
        cd = self.cd
        local = np.einsum("tq,qi,qj->tij", cd.wdet, cd.phi2, cd.phi2)
        return self._p2_matrix(local)

    def assemble_diffusion(self, field: str, coefficient: float) -> sp.csr_matrix:
        """``coefficient * (grad ., grad .)`` for ``field`` in {"velocity", "temperature"}."""
        if field == "temperature":
            return (coefficient * self.stiffness).tocsr()
        if field == "velocity":
            return self._vector_blockdiag(coefficient * self.stiffness)
        raise ValueError(f"unknown field {field!r}")

    def _convection_scalar(self, u_adv: np.ndarray) -> sp.csr_matrix:
        cd = self.cd
        a = self.velocity_at_qp(u_adv)
        adv_grad = np.einsum("tqk,tqjk->tqj", a, cd.dphi2)
        n = np.einsum("tq,qi,tqj->tij", cd.wdet, cd.phi2, adv_grad)
        return self._p2_matrix(0.5 * (n - n.transpose(0, 2, 1)))

    def assemble_convection(self, u_adv: np.ndarray, field: str) -> sp.csr_matrix:
        """Matrix C with ``C[i, j] = b(u_adv, phi_j, phi_i)`` (antisymmetric)."""
        c = self._convection_scalar(np.asarray(u_adv, dtype=float))
        if field == "temperature":
            return c
        if field == "velocity":
            return self._vector_blockdiag(c)
        raise ValueError(f"unknown field {field!r}")

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        """D with ``D[q, j] = (div phi_j, psi_q)``; shape (n_pressure, n_velocity)."""
        cd = self.cd
        # local velocity ordering: x-component basis then y-component basis
        dx = np.einsum("tq,qp,tqj->tpj", cd.wdet, cd.phi1, cd.dphi2[..., 0])
        dy = np.einsum("tq,qp,tqj->tpj", cd.wdet, cd.phi1, cd.dphi2[..., 1])
        local = np.concatenate([dx, dy], axis=2)
        return _scatter(local, self.dofs.cell_pressure, self.cell_v, (self.np_, self.nv))

    def assemble_divergence(self) -> sp.csr_matrix:
        return self.divergence

    @cached_property
    def pressure_mean(self) -> np.ndarray:
        """Integrals of the pressure basis functions."""
        cd = self.cd
        local = np.einsum("tq,qp->tp", cd.wdet, cd.phi1)
        out = np.zeros(self.np_)
        np.add.at(out, self.dofs.cell_pressure, local)
        return out

    @cached_property
    def pressure_mass(self) -> sp.csr_matrix:
        cd = self.cd
        local = np.einsum("tq,qi,qj->tij", cd.wdet, cd.phi1, cd.phi1)
        cp = self.dofs.cell_pressure
        return _scatter(local, cp, cp, (self.np_, self.np_))

    def assemble_buoyancy(self, Ri: float) -> sp.csr_matrix:
        """``Ri (<0, theta>, v)`` as an (n_velocity, n_temperature) matrix."""
        zero = sp.csr_matrix((self.n2, self.n2))
        return sp.vstack([zero, Ri * self.mass], format="csr")

    # -- loads -------------------------------------------------------------
    def scalar_load(self, func: Optional[Callable]) -> np.ndarray:
        """``(func, phi_i)`` for a scalar source; zero when ``func`` is None."""
        out = np.zeros(self.n2)
        if func is None:
            return out
        cd = self.cd
        x, y = cd.points[..., 0], cd.points[..., 1]
        vals = np.asarray(func(x, y), dtype=float) * np.ones_like(x)
        local = np.einsum("tq,tq,qi->ti", cd.wdet, vals, cd.phi2)
        np.add.at(out, self.dofs.cell_p2, local)
        return out

    def velocity_load(self, func: Optional[Callable]) -> np.ndarray:
        """``(f, v_i)`` for a vector forcing returning ``(fx, fy)``."""
        if func is None:
            return np.zeros(self.nv)
        return np.concatenate([
            self.scalar_load(lambda x, y: func(x, y)[0]),
            self.scalar_load(lambda x, y: func(x, y)[1]),
        ])

    # -- Newton linearization ----------------------------------------------
    def assemble_convection_derivative(self, u_old: np.ndarray) -> sp.csr_matrix:
        """Matrix of ``u -> b(u, u_old, v)``; shape (n_velocity, n_velocity)."""
        cd = self.cd
        uq = self.velocity_at_qp(u_old)
        gq = self.velocity_grad_at_qp(u_old)
        t1 = np.einsum("tq,qi,qj,tqcd->tcdij", cd.wdet, cd.phi2, cd.phi2, gq)
        t2 = np.einsum("tq,qj,tqid,tqc->tcdij", cd.wdet, cd.phi2, cd.dphi2, uq)
        loc = 0.5 * (t1 - t2)
        nt = loc.shape[0]
        local = loc.transpose(0, 1, 3, 2, 4).reshape(nt, 12, 12)
        return _scatter(local, self.cell_v, self.cell_v, (self.nv, self.nv))

    def assemble_temperature_coupling(self, theta_old: np.ndarray) -> sp.csr_matrix:
        """Matrix of ``u -> b*(u, theta_old, chi)``; shape (n_temperature, n_velocity)."""
        cd = self.cd
        th = self.scalar_at_qp(theta_old)
        gth = self.scalar_grad_at_qp(theta_old)
        t1 = np.einsum("tq,qi,qj,tqd->tidj", cd.wdet, cd.phi2, cd.phi2, gth)
        t2 = np.einsum("tq,qj,tqid,tq->tidj", cd.wdet, cd.phi2, cd.dphi2, th)
        nt = t1.shape[0]
        local = (0.5 * (t1 - t2)).reshape(nt, 6, 12)
        return _scatter(local, self.dofs.cell_p2, self.cell_v, (self.n2, self.nv))

    def assemble_newton_blocks(self, u_old: np.ndarray, theta_old: np.ndarray, config: ProblemConfig):
        """Coupled Newton matrix and right-hand side in the unknowns (u, p, theta).

        The momentum block holds both convection linearizations, the energy
        block both transport linearizations; the right-hand side carries the
        sources plus ``b(u_old, u_old, .)`` and ``b*(u_old, theta_old, .)``.
        Rows and columns are ordered velocity, pressure, temperature.
        """
        cv = self.assemble_convection(u_old, "velocity")
        ct = self.assemble_convection(u_old, "temperature")
        a_uu = self.assemble_diffusion("velocity", config.nu) + cv + self.assemble_convection_derivative(u_old)
        a_tt = self.assemble_diffusion("temperature", config.kappa) + ct
        a_tu = self.assemble_temperature_coupling(theta_old)
        d = self.divergence
        mat = sp.bmat(
            [
                [a_uu, -d.T, -self.assemble_buoyancy(config.Ri)],
                [-d, None, None],
                [a_tu, None, a_tt],
            ],
            format="csr",
        )
        rhs = np.concatenate([
            self.velocity_load(config.f) + cv @ u_old,
            np.zeros(self.np_),
            self.scalar_load(config.gamma) + ct @ theta_old,
        ])
        return mat, rhs

    @property
    def newton_sizes(self):
        return self.nv, self.np_, self.n2
