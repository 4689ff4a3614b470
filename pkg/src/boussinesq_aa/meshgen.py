"""Structured triangulations of the unit square.

Meshes are built from a uniform triangulation, optionally graded toward the
walls by conforming longest-edge bisection, and optionally barycentrically
(Alfeld) refined so that Scott-Vogelius elements are stable on them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BOUNDARY_TAGS = ("left", "right", "top", "bottom")

_WALL_TOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh arguments or a mesh that violates its invariants."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of the unit square.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    boundary_edges : (nb, 2) int array of vertex pairs
    boundary_tags : tuple of str, one tag per boundary edge
    alfeld : bool
        True when the mesh is the barycentric refinement of another mesh.
    history : tuple of str
        Operations applied to build the mesh, oldest first.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    alfeld: bool = False
    history: tuple = ()
    _edges: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lengths = [np.linalg.norm(p[:, (i + 1) % 3] - p[:, i], axis=1) for i in range(3)]
        return np.max(lengths, axis=0)

    def edges(self):
        """Unique edges and the cell-to-edge table.

        Returns
        -------
        edges : (ne, 2) int array, each row sorted ascending
        cell_edges : (nt, 3) int array; local edge i joins local vertices
            i and (i + 1) % 3
        """
        if "edges" not in self._edges:
            t = self.triangles
            local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)
            flat = np.sort(local.reshape(-1, 2), axis=1)
            edges, inverse = np.unique(flat, axis=0, return_inverse=True)
            self._edges["edges"] = edges
            self._edges["cell_edges"] = inverse.reshape(-1, 3)
        return self._edges["edges"], self._edges["cell_edges"]

    def edge_cell_counts(self) -> np.ndarray:
        edges, cell_edges = self.edges()
        return np.bincount(cell_edges.ravel(), minlength=len(edges))

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def tagged_edges(self, tag: str) -> np.ndarray:
        mask = np.array([t == tag for t in self.boundary_tags], dtype=bool)
        return self.boundary_edges[mask]

    def check(self) -> None:
        """Raise MeshError unless orientation, conformity and tagging hold."""
        if np.any(self.signed_areas() <= 0):
            raise MeshError("triangle with non-positive signed area")
        counts = self.edge_cell_counts()
        if np.any((counts < 1) | (counts > 2)):
            raise MeshError("non-conforming edge")
        edges, _ = self.edges()
        boundary = {tuple(e) for e in edges[counts == 1]}
        tagged = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        if boundary != tagged or len(tagged) != len(self.boundary_edges):
            raise MeshError("boundary edge table does not match the mesh boundary")
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise MeshError("every boundary edge needs exactly one tag")
        if any(t not in BOUNDARY_TAGS for t in self.boundary_tags):
            raise MeshError("unknown boundary tag")

    def to_text(self) -> str:
        lines = [f"{x!r} {y!r}" for x, y in self.vertices.tolist()]
        lines += [f"{i} {j} {k}" for i, j, k in self.triangles.tolist()]
        lines += [f"{i} {j} {tag}" for (i, j), tag in zip(self.boundary_edges.tolist(), self.boundary_tags)]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        """Write the plain-text export: vertices, then triangles, then tagged boundary edges."""
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _wall_tag(midpoint) -> str:
    x, y = midpoint
    if abs(x) < _WALL_TOL:
        return "left"
    if abs(x - 1.0) < _WALL_TOL:
        return "right"
    if abs(y) < _WALL_TOL:
        return "bottom"
    if abs(y - 1.0) < _WALL_TOL:
        return "top"
    raise MeshError(f"boundary edge with midpoint {midpoint} is not on the unit square")


def _make_mesh(vertices, triangles, alfeld=False, history=()) -> Mesh:
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    proto = Mesh(vertices, triangles, np.zeros((0, 2), dtype=np.int64), (), alfeld, tuple(history))
    edges, _ = proto.edges()
    counts = proto.edge_cell_counts()
    bnd = edges[counts == 1]
    tags = tuple(_wall_tag(vertices[e].mean(axis=0)) for e in bnd)
    mesh = Mesh(vertices, triangles, bnd, tags, alfeld, tuple(history))
    mesh.check()
    return mesh


def uniform_square_mesh(n: int) -> Mesh:
    """Uniform mesh with ``2 n^2`` triangles.

    Each of the ``n x n`` cells is split along its lower-left to upper-right
    diagonal.
    """
    if int(n) != n or n < 1:
        raise MeshError(f"subdivisions per side must be a positive integer, got {n!r}")
    n = int(n)
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v11 = idx[1:, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return _make_mesh(vertices, triangles, history=(f"uniform({n})",))


class _Bisector:
    """Conforming longest-edge bisection with recursive closure."""

    def __init__(self, mesh: Mesh):
        self.verts = [tuple(v) for v in mesh.vertices.tolist()]
        self.tris = [list(t) for t in mesh.triangles.tolist()]
        self.alive = [True] * len(self.tris)
        self.edge_tris: dict = {}
        self.midpoints: dict = {}
        for t_id, tri in enumerate(self.tris):
            for e in self._tri_edges(tri):
                self.edge_tris.setdefault(e, set()).add(t_id)

    @staticmethod
    def _tri_edges(tri):
        return [tuple(sorted((tri[i], tri[(i + 1) % 3]))) for i in range(3)]

    def _length2(self, e) -> float:
        (x0, y0), (x1, y1) = self.verts[e[0]], self.verts[e[1]]
        return (x1 - x0) ** 2 + (y1 - y0) ** 2

    def longest_edge(self, t_id):
        tri = self.tris[t_id]
        best, best_key = None, None
        for i in range(3):
            e = tuple(sorted((tri[i], tri[(i + 1) % 3])))
            # near-ties resolved by vertex indices so the result is deterministic
            key = (round(self._length2(e), 12), e)
            if best_key is None or key > best_key:
                best, best_key = e, key
        return best

    def diameter(self, t_id) -> float:
        return float(np.sqrt(self._length2(self.longest_edge(t_id))))

    def _midpoint(self, e) -> int:
        if e not in self.midpoints:
            (x0, y0), (x1, y1) = self.verts[e[0]], self.verts[e[1]]
            self.verts.append((0.5 * (x0 + x1), 0.5 * (y0 + y1)))
            self.midpoints[e] = len(self.verts) - 1
        return self.midpoints[e]

    def _split(self, t_id, e) -> None:
        tri = self.tris[t_id]
        for i in range(3):
            if tuple(sorted((tri[i], tri[(i + 1) % 3]))) == e:
                a, b, c = tri[i], tri[(i + 1) % 3], tri[(i + 2) % 3]
                break
        mid = self._midpoint(e)
        self.alive[t_id] = False
        for old in self._tri_edges(tri):
            self.edge_tris[old].discard(t_id)
        for child in ([a, mid, c], [mid, b, c]):
            self.tris.append(child)
            self.alive.append(True)
            c_id = len(self.tris) - 1
            for ce in self._tri_edges(child):
                self.edge_tris.setdefault(ce, set()).add(c_id)

    def refine(self, t_id) -> None:
        while self.alive[t_id]:
            e = self.longest_edge(t_id)
            others = [o for o in self.edge_tris[e] if o != t_id]
            if not others:
                self._split(t_id, e)
            elif self.longest_edge(others[0]) == e:
                nb = others[0]
                self._split(t_id, e)
                self._split(nb, e)
            else:
                self.refine(others[0])

    def touches_boundary(self, t_id) -> bool:
        for v in self.tris[t_id]:
            x, y = self.verts[v]
            if min(x, y, 1.0 - x, 1.0 - y) < _WALL_TOL:
                return True
        return False

    def live(self):
        return [t for t in range(len(self.tris)) if self.alive[t]]


def refine_boundary_layer(mesh: Mesh, layers: int) -> Mesh:
    """Grade ``mesh`` toward the walls.

    Each layer halves the diameter of every triangle touching the boundary by
    repeated longest-edge bisection; neighbours are bisected as needed so the
    result stays conforming.
    """
    if int(layers) != layers or layers < 0:
        raise MeshError(f"layers must be a non-negative integer, got {layers!r}")
    if layers == 0:
        return mesh
    if mesh.alfeld:
        raise MeshError("boundary refinement must precede the Alfeld split")
    bis = _Bisector(mesh)
    for _ in range(int(layers)):
        near = [t for t in bis.live() if bis.touches_boundary(t)]
        target = 0.5 * max(bis.diameter(t) for t in near) * (1.0 + 1e-9)
        while True:
            todo = [t for t in bis.live() if bis.touches_boundary(t) and bis.diameter(t) > target]
            if not todo:
                break
            for t in todo:
                bis.refine(t)
    tris = [bis.tris[t] for t in bis.live()]
    return _make_mesh(
        np.array(bis.verts), np.array(tris), history=mesh.history + (f"boundary_layer({layers})",)
    )


def alfeld_split(mesh: Mesh) -> Mesh:
    """Barycentric refinement: every triangle becomes three sharing its barycenter."""
    nv = mesh.n_vertices
    t = mesh.triangles
    centers = mesh.vertices[t].mean(axis=1)
    g = nv + np.arange(len(t))
    children = np.stack(
        [
            np.column_stack([t[:, 0], t[:, 1], g]),
            np.column_stack([t[:, 1], t[:, 2], g]),
            np.column_stack([t[:, 2], t[:, 0], g]),
        ],
        axis=1,
    ).reshape(-1, 3)
    vertices = np.vstack([mesh.vertices, centers])
    return _make_mesh(vertices, children, alfeld=True, history=mesh.history + ("alfeld",))


def benchmark_mesh(n: int = 16, layers: int = 1, alfeld: bool = False) -> Mesh:
    """Uniform mesh, graded toward the walls, optionally Alfeld split."""
    mesh = refine_boundary_layer(uniform_square_mesh(n), layers)
    return alfeld_split(mesh) if alfeld else mesh
