import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boussinesq_aa.meshgen import (
    BOUNDARY_TAGS,
    MeshError,
    alfeld_split,
    benchmark_mesh,
    refine_boundary_layer,
    uniform_square_mesh,
)


@pytest.mark.parametrize("n, n_tri, n_vert", [(1, 2, 4), (4, 32, 25), (7, 98, 64)])
def test_uniform_counts(n, n_tri, n_vert):
    mesh = uniform_square_mesh(n)
    assert mesh.n_triangles == n_tri
    assert mesh.n_vertices == n_vert


def test_uniform_area_partition():
    assert abs(uniform_square_mesh(2).signed_areas().sum() - 1.0) < 1e-14


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_uniform_rejects_bad_n(bad):
    with pytest.raises(MeshError):
        uniform_square_mesh(bad)


def test_uniform_diagonal_runs_lower_left_to_upper_right():
    mesh = uniform_square_mesh(1)
    edges, _ = mesh.edges()
    diag = [tuple(e) for e in edges.tolist() if mesh.edge_cell_counts()[edges.tolist().index(list(e))] == 2]
    assert len(diag) == 1
    p, q = mesh.vertices[list(diag[0])]
    assert {tuple(p), tuple(q)} == {(0.0, 0.0), (1.0, 1.0)}


def test_boundary_tags_cover_walls():
    mesh = uniform_square_mesh(3)
    assert set(mesh.boundary_tags) == set(BOUNDARY_TAGS)
    for tag, check in [("left", lambda p: p[:, 0] == 0), ("right", lambda p: p[:, 0] == 1),
                       ("bottom", lambda p: p[:, 1] == 0), ("top", lambda p: p[:, 1] == 1)]:
        e = mesh.tagged_edges(tag)
        assert len(e) == 3
        assert np.all(check(mesh.vertices[e.ravel()]))
    lengths = np.linalg.norm(np.diff(mesh.vertices[mesh.boundary_edges], axis=1)[:, 0], axis=1)
    assert abs(lengths.sum() - 4.0) < 1e-14


def test_boundary_layer_zero_is_identity():
    mesh = uniform_square_mesh(4)
    assert refine_boundary_layer(mesh, 0) is mesh


def test_boundary_layer_refines_near_walls():
    mesh = refine_boundary_layer(uniform_square_mesh(4), 1)
    mesh.check()
    assert mesh.n_triangles > 32
    # interior = inside the ring of coarse cells that touch the walls
    c = mesh.vertices[mesh.triangles].mean(axis=1)
    interior = np.all((c > 0.25) & (c < 0.75), axis=1)
    d = mesh.diameters()
    assert interior.any()
    assert d[~interior].min() < d[interior].min()


def test_boundary_layer_rejects_negative():
    with pytest.raises(MeshError):
        refine_boundary_layer(uniform_square_mesh(2), -1)


def test_alfeld_two_triangles():
    mesh = alfeld_split(uniform_square_mesh(1))
    assert mesh.n_triangles == 6
    assert mesh.n_vertices == 6
    assert mesh.alfeld


def test_alfeld_counts_and_area():
    base = uniform_square_mesh(4)
    mesh = alfeld_split(base)
    assert mesh.n_triangles == 96
    assert mesh.n_vertices == base.n_vertices + base.n_triangles
    assert abs(mesh.signed_areas().sum() - 1.0) < 1e-14


def test_text_export(tmp_path):
    mesh = uniform_square_mesh(2)
    path = tmp_path / "mesh.txt"
    mesh.write(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == mesh.n_vertices + mesh.n_triangles + len(mesh.boundary_edges)
    x, y = map(float, lines[mesh.n_vertices - 1].split())
    assert (x, y) == (1.0, 1.0)
    assert lines[mesh.n_vertices].split() == [str(i) for i in mesh.triangles[0]]
    assert lines[-1].split()[2] in BOUNDARY_TAGS


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 6), layers=st.integers(0, 2), alfeld=st.booleans())
def test_pipeline_invariants(n, layers, alfeld):
    before = refine_boundary_layer(uniform_square_mesh(n), layers)
    mesh = alfeld_split(before) if alfeld else before
    mesh.check()
    areas = mesh.signed_areas()
    assert np.all(areas > 0)
    assert abs(areas.sum() - 1.0) < 1e-13
    counts = mesh.edge_cell_counts()
    assert set(np.unique(counts)) <= {1, 2}
    if alfeld:
        assert mesh.n_triangles == 3 * before.n_triangles


def test_benchmark_mesh_history():
    mesh = benchmark_mesh(4, 1, alfeld=True)
    assert mesh.history == ("uniform(4)", "boundary_layer(1)", "alfeld")
