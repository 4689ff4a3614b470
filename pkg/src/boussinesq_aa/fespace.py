"""Mixed finite element spaces on triangles.

Velocity is vector P2, temperature scalar P2, pressure either continuous P1
(Taylor-Hood) or discontinuous P1 (Scott-Vogelius, Alfeld meshes only).
Scalar P2 degrees of freedom are numbered vertices first, then edge midpoints
in the order of ``Mesh.edges()``. Velocity stacks the x component on top of
the y component.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from .meshgen import Mesh


class ConfigurationError(ValueError):
    """Element family and mesh do not fit together."""


class GeometryError(ValueError):
    """Degenerate or inverted triangle."""


class PressureKind(str, Enum):
    TAYLOR_HOOD = "taylor-hood"
    SCOTT_VOGELIUS = "scott-vogelius"


@dataclass(frozen=True)
class ElementFamily:
    pressure_kind: PressureKind = PressureKind.TAYLOR_HOOD
    velocity_degree: int = 2
    temperature_degree: int = 2

    def __post_init__(self):
        object.__setattr__(self, "pressure_kind", PressureKind(self.pressure_kind))
        if self.velocity_degree != 2 or self.temperature_degree != 2:
            raise ConfigurationError("only quadratic velocity and temperature are supported")

    @property
    def discontinuous_pressure(self) -> bool:
        return self.pressure_kind is PressureKind.SCOTT_VOGELIUS


TAYLOR_HOOD = ElementFamily(PressureKind.TAYLOR_HOOD)
SCOTT_VOGELIUS = ElementFamily(PressureKind.SCOTT_VOGELIUS)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Quadrature on the reference triangle (0,0), (1,0), (0,1).

    ``points`` are barycentric coordinates (lambda0, lambda1, lambda2) with
    lambda1 = xi and lambda2 = eta.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def ref_coords(self) -> np.ndarray:
        return self.points[:, 1:]


def dunavant7() -> QuadratureRule:
    """Symmetric seven-point rule, exact for polynomials of degree 5."""
    s = np.sqrt(15.0)
    b1, b2 = (6.0 + s) / 21.0, (6.0 - s) / 21.0
    a1, a2 = 1.0 - 2.0 * b1, 1.0 - 2.0 * b2
    pts = [(1 / 3, 1 / 3, 1 / 3), (a1, b1, b1), (b1, a1, b1), (b1, b1, a1), (a2, b2, b2), (b2, a2, b2), (b2, b2, a2)]
    w1 = (155.0 + s) / 1200.0
    w2 = (155.0 - s) / 1200.0
    wts = [9.0 / 40.0] + [w1] * 3 + [w2] * 3
    return QuadratureRule(np.array(pts), 0.5 * np.array(wts), 5)


def p1_basis(lam: np.ndarray):
    """Values (nq, 3) and reference gradients (nq, 3, 2) of the P1 basis."""
    vals = lam.copy()
    grads = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(lam), 3, 2)).copy()
    return vals, grads


# local P2 numbering: vertices 0,1,2 then midpoints of edges (0,1), (1,2), (2,0)
_P2_EDGES = ((0, 1), (1, 2), (2, 0))


def p2_basis(lam: np.ndarray):
    """Values (nq, 6) and reference gradients (nq, 6, 2) of the P2 basis."""
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    nq = len(lam)
    vals = np.empty((nq, 6))
    grads = np.empty((nq, 6, 2))
    for i in range(3):
        vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        grads[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * dlam[i]
    for k, (i, j) in enumerate(_P2_EDGES):
        vals[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
        grads[:, 3 + k, :] = 4.0 * (lam[:, j][:, None] * dlam[i] + lam[:, i][:, None] * dlam[j])
    return vals, grads


def _jacobians(coords: np.ndarray):
    """Affine maps for (nt, 3, 2) vertex coordinates: J, det J, J^{-T}."""
    J = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0.0):
        raise GeometryError("degenerate or inverted triangle")
    invT = np.empty_like(J)
    invT[:, 0, 0] = J[:, 1, 1] / det
    invT[:, 0, 1] = -J[:, 1, 0] / det
    invT[:, 1, 0] = -J[:, 0, 1] / det
    invT[:, 1, 1] = J[:, 0, 0] / det
    return J, det, invT


def shape_values(field_kind: str, triangle, quad: QuadratureRule):
    """Basis values and physical gradients on one triangle.

    Parameters
    ----------
    field_kind : {"p2", "p1"}
    triangle : (3, 2) array of vertex coordinates
    quad : QuadratureRule

    Returns
    -------
    values : (nq, nb) array
    gradients : (nq, nb, 2) array
    points : (nq, 2) physical quadrature points
    """
    coords = np.asarray(triangle, dtype=float).reshape(1, 3, 2)
    _, _, invT = _jacobians(coords)
    basis = {"p2": p2_basis, "p1": p1_basis}[field_kind]
    vals, ref_grads = basis(quad.points)
    grads = np.einsum("qbk,lk->qbl", ref_grads, invT[0])
    points = quad.points @ coords[0]
    return vals, grads, points


@dataclass(frozen=True)
class BoundaryConditions:
    """Dirichlet data per wall.

    Velocity is no-slip (zero) on the walls listed in ``velocity_walls``;
    temperature takes ``temperature[tag](x, y)`` on the listed walls and a
    homogeneous Neumann condition elsewhere.
    """

    velocity_walls: tuple = ("left", "right", "top", "bottom")
    temperature: Mapping[str, Callable] = field(default_factory=dict)


def heated_cavity_bc() -> BoundaryConditions:
    """No slip everywhere, T = 0 at x = 0, T = 1 at x = 1, insulated top/bottom."""
    return BoundaryConditions(
        temperature={
            "left": lambda x, y: np.zeros_like(x),
            "right": lambda x, y: np.ones_like(x),
        }
    )


@dataclass(frozen=True, eq=False)
class DofMap:
    """Degree-of-freedom bookkeeping for the (u, p, theta) spaces.

    Attributes
    ----------
    n_scalar : number of scalar P2 nodes (vertices + edges)
    cell_p2 : (nt, 6) scalar P2 global indices per cell
    cell_pressure : (nt, 3) pressure indices per cell
    node_coords : (n_scalar, 2) coordinates of the P2 nodes
    velocity_dirichlet : bool mask over the n_velocity velocity DOFs
    temperature_dirichlet : bool mask over the n_temperature DOFs
    temperature_values : prescribed values (used where the mask is set)
    """

    mesh: Mesh
    family: ElementFamily
    n_scalar: int
    n_pressure: int
    cell_p2: np.ndarray
    cell_pressure: np.ndarray
    node_coords: np.ndarray
    velocity_dirichlet: np.ndarray
    temperature_dirichlet: np.ndarray
    temperature_values: np.ndarray
    pressure_mean_constraint: bool = True

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_scalar

    @property
    def n_temperature(self) -> int:
        return self.n_scalar

    @property
    def velocity_values(self) -> np.ndarray:
        return np.zeros(self.n_velocity)

    def cell_velocity(self) -> np.ndarray:
        """(nt, 12) velocity indices: six x-component DOFs then six y-component DOFs."""
        return np.hstack([self.cell_p2, self.cell_p2 + self.n_scalar])

    def interpolate(self, func: Callable) -> np.ndarray:
        """Nodal P2 interpolant of a scalar function ``func(x, y)``."""
        x, y = self.node_coords.T
        return np.asarray(func(x, y), dtype=float) * np.ones(self.n_scalar)


def _nodes_on(mesh: Mesh, edge_to_node: dict, tags) -> np.ndarray:
    nodes = set()
    for (i, j), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags):
        if tag in tags:
            nodes.update((i, j, edge_to_node[(min(i, j), max(i, j))]))
    return np.array(sorted(nodes), dtype=np.int64)


def build_dofmap(mesh: Mesh, family: ElementFamily = TAYLOR_HOOD, bc: BoundaryConditions | None = None) -> DofMap:
    """Number the degrees of freedom and build the Dirichlet masks."""
    if bc is None:
        bc = heated_cavity_bc()
    if family.discontinuous_pressure and not mesh.alfeld:
        raise ConfigurationError("Scott-Vogelius pressure needs an Alfeld-split mesh")
    nv = mesh.n_vertices
    edges, cell_edges = mesh.edges()
    n_scalar = nv + len(edges)
    cell_p2 = np.hstack([mesh.triangles, nv + cell_edges])
    node_coords = np.vstack([mesh.vertices, mesh.vertices[edges].mean(axis=1)])
    edge_to_node = {(int(a), int(b)): nv + k for k, (a, b) in enumerate(edges.tolist())}

    if family.discontinuous_pressure:
        n_pressure = 3 * mesh.n_triangles
        cell_pressure = np.arange(n_pressure, dtype=np.int64).reshape(-1, 3)
    else:
        n_pressure = nv
        cell_pressure = mesh.triangles.copy()

    vel_nodes = _nodes_on(mesh, edge_to_node, bc.velocity_walls)
    vmask = np.zeros(2 * n_scalar, dtype=bool)
    vmask[vel_nodes] = True
    vmask[vel_nodes + n_scalar] = True

    tmask = np.zeros(n_scalar, dtype=bool)
    tvals = np.zeros(n_scalar)
    # assign in a fixed wall order so corner nodes get deterministic values
    for tag in sorted(bc.temperature):
        nodes = _nodes_on(mesh, edge_to_node, (tag,))
        if len(nodes) == 0:
            continue
        tmask[nodes] = True
        x, y = node_coords[nodes].T
        tvals[nodes] = np.asarray(bc.temperature[tag](x, y), dtype=float) * np.ones(len(nodes))

    return DofMap(
        mesh=mesh,
        family=family,
        n_scalar=n_scalar,
        n_pressure=n_pressure,
        cell_p2=cell_p2,
        cell_pressure=cell_pressure,
        node_coords=node_coords,
        velocity_dirichlet=vmask,
        temperature_dirichlet=tmask,
        temperature_values=tvals,
    )


@dataclass(frozen=True, eq=False)
class CellData:
    """Per-cell basis data at quadrature points, shared by every assembly routine.

    Attributes
    ----------
    phi2, phi1 : (nq, 6) and (nq, 3) reference values (affine map: cell independent)
    dphi2 : (nt, nq, 6, 2) physical P2 gradients
    dphi1 : (nt, 3, 2) physical P1 gradients (constant per cell)
    wdet : (nt, nq) quadrature weights times |det J|
    points : (nt, nq, 2) physical quadrature points
    """

    dofs: DofMap
    quad: QuadratureRule
    phi2: np.ndarray
    phi1: np.ndarray
    dphi2: np.ndarray
    dphi1: np.ndarray
    wdet: np.ndarray
    points: np.ndarray


def cell_data(dofs: DofMap, quad: QuadratureRule | None = None) -> CellData:
    quad = quad or dunavant7()
    mesh = dofs.mesh
    coords = mesh.vertices[mesh.triangles]
    _, det, invT = _jacobians(coords)
    phi2, ref2 = p2_basis(quad.points)
    phi1, ref1 = p1_basis(quad.points)
    dphi2 = np.einsum("qbk,tlk->tqbl", ref2, invT)
    dphi1 = np.einsum("bk,tlk->tbl", ref1[0], invT)
    wdet = det[:, None] * quad.weights[None, :]
    points = np.einsum("qi,tik->tqk", quad.points, coords)
    return CellData(dofs, quad, phi2, phi1, dphi2, dphi1, wdet, points)
