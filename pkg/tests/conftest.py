import numpy as np
import pytest

from boussinesq_aa.fespace import shape_values


@pytest.fixture
def rng():
    return np.random.default_rng(20201018)


def quadrature_loop(dofs, quad, integrand):
    """Sum ``integrand(vals, grads, points, cell_dofs)`` times weights over cells, one cell at a time.

    Independent of the vectorized assembly path; used as an oracle.
    """
    mesh = dofs.mesh
    total = 0.0
    for t, tri in enumerate(mesh.triangles):
        coords = mesh.vertices[tri]
        vals, grads, pts = shape_values("p2", coords, quad)
        area2 = abs(np.linalg.det(np.array([coords[1] - coords[0], coords[2] - coords[0]])))
        f = integrand(vals, grads, pts, dofs.cell_p2[t])
        total += area2 * np.dot(quad.weights, f)
    return total
