import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rarefied_pgd.mesh import (MeshError, TriMesh, generate_disk_mesh, generate_square_mesh,
                               generate_trapezoid_mesh, load_mesh, make_mesh, save_mesh,
                               trapezoid_area, trapezoid_height)


def check_invariants(mesh: TriMesh):
    assert np.all(mesh.areas > 0)
    # conformity: neighbour relation is symmetric and every edge has at most two owners
    for e, k in zip(*np.nonzero(mesh.neighbors >= 0)):
        e2, k2 = mesh.neighbors[e, k], mesh.neighbor_edge[e, k]
        assert mesh.neighbors[e2, k2] == e and mesh.neighbor_edge[e2, k2] == k
    edges = {}
    for tri in mesh.triangles:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((int(tri[a]), int(tri[b]))))
            edges[key] = edges.get(key, 0) + 1
    assert max(edges.values()) <= 2
    n_interior = sum(1 for c in edges.values() if c == 2)
    assert int((mesh.neighbors >= 0).sum()) == 2 * n_interior
    mids = mesh.edge_midpoints()
    cents = mesh.centroids
    for edge in mesh.boundary_edges:
        n = np.array(edge.normal)
        assert abs(np.linalg.norm(n) - 1) < 1e-12
        assert n @ (mids[edge.element, edge.local_edge] - cents[edge.element]) > 0


def test_square_reference_partition_has_128_elements():
    assert generate_square_mesh(8).n_elements == 128


def test_square_single_division():
    mesh = generate_square_mesh(1)
    assert mesh.n_elements == 2
    assert mesh.area == pytest.approx(1.0, abs=1e-14)


def test_square_four_divisions_enumeration():
    mesh = generate_square_mesh(4)
    assert np.allclose(mesh.areas, 1 / 32, atol=1e-15)
    assert len(mesh.boundary_edges) == 16


def test_trapezoid_reference_partition_has_128_elements():
    assert generate_trapezoid_mesh(8).n_elements == 128


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_trapezoid_area_matches_formula(n):
    height = 0.25 * math.tan(math.radians(54.74))
    assert trapezoid_height() == pytest.approx(height, rel=1e-14)
    expected = (1 + 0.5) / 2 * height
    assert generate_trapezoid_mesh(n).area == pytest.approx(expected, abs=1e-10)
    assert trapezoid_area() == pytest.approx(expected, abs=1e-14)


def test_trapezoid_normals_unit_and_outward():
    check_invariants(generate_trapezoid_mesh(2))


def test_disk_default_refinement_is_close_to_780_elements():
    n = make_mesh("circle", 11).n_elements
    assert abs(n - 780) / 780 < 0.1


def test_disk_area_increases_towards_pi():
    areas = [generate_disk_mesh(n).area for n in (1, 2, 4, 8)]
    assert all(a < math.pi for a in areas)
    assert np.all(np.diff(areas) > 0)
    assert math.pi - areas[-1] < 0.02


def test_disk_boundary_vertices_on_unit_circle():
    mesh = generate_disk_mesh(2)
    v = mesh.vertices
    on_boundary = set()
    for e in mesh.boundary_edges:
        tri = mesh.triangles[e.element]
        on_boundary.update([int(tri[e.local_edge]), int(tri[(e.local_edge + 1) % 3])])
    r2 = (v[list(on_boundary)] ** 2).sum(axis=1)
    assert np.all(np.abs(r2 - 1) < 1e-12)


@pytest.mark.parametrize("gen", [generate_square_mesh, generate_trapezoid_mesh, generate_disk_mesh])
def test_zero_refinement_rejected(gen):
    with pytest.raises(ValueError):
        gen(0)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["square", "trapezoid", "circle"]), st.integers(1, 9))
def test_generated_meshes_satisfy_invariants(domain, n):
    mesh = make_mesh(domain, n)
    check_invariants(mesh)
    if domain == "square":
        assert mesh.area == pytest.approx(1.0, abs=1e-10)
    elif domain == "trapezoid":
        assert mesh.area == pytest.approx(trapezoid_area(), abs=1e-10)


@given(st.integers(1, 12))
def test_refinement_quadruples_square_elements(n):
    assert generate_square_mesh(2 * n).n_elements == 4 * generate_square_mesh(n).n_elements


def test_square_vertex_set_symmetric():
    v = generate_square_mesh(6).vertices
    key = {tuple(np.round(p, 12)) for p in v}
    for tf in (lambda p: (p[1], p[0]), lambda p: (-p[0], p[1]), lambda p: (p[0], -p[1])):
        assert {tuple(np.round(tf(p), 12) + 0.0) for p in v} == key


def test_round_trip_preserves_tables(tmp_path):
    mesh = generate_square_mesh(8)
    path = tmp_path / "square.mesh"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.normals, mesh.normals)


def test_zero_area_triangle_is_rejected(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("trimesh 3 1\nv 0 0\nv 1 0\nv 2 0\nt 0 1 2\n")
    with pytest.raises(MeshError, match="element 0"):
        load_mesh(path)


def test_inverted_triangle_is_rejected():
    with pytest.raises(MeshError, match="inverted"):
        TriMesh(np.array([[0, 0], [0, 1], [1, 0]]), np.array([[0, 1, 2]]))


def test_hand_written_two_triangle_square(tmp_path):
    path = tmp_path / "unit.mesh"
    path.write_text(
        "trimesh 4 2\n"
        "v 0 0\nv 1 0\nv 1 1\nv 0 1\n"
        "t 0 1 2\nt 0 2 3\n"
    )
    mesh = load_mesh(path)
    assert mesh.area == pytest.approx(1.0, abs=1e-15)
    check_invariants(mesh)


def test_parse_error_names_line(tmp_path):
    path = tmp_path / "broken.mesh"
    path.write_text("trimesh 3 1\nv 0 0\nv 1 zero\nv 0 1\nt 0 1 2\n")
    with pytest.raises(MeshError, match=":3:"):
        load_mesh(path)


def test_count_mismatch_and_missing_header(tmp_path):
    path = tmp_path / "short.mesh"
    path.write_text("trimesh 4 1\nv 0 0\nv 1 0\nv 0 1\nt 0 1 2\n")
    with pytest.raises(MeshError, match="declares"):
        load_mesh(path)
    path.write_text("v 0 0\n")
    with pytest.raises(MeshError, match="header"):
        load_mesh(path)


def test_non_manifold_edge_rejected():
    verts = np.array([[0, 0], [1, 0], [0.5, 1], [0.5, -1], [0.5, 0.5]])
    tris = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(MeshError):
        TriMesh(verts, tris)


def test_out_of_range_index_rejected():
    with pytest.raises(MeshError, match="out of range"):
        TriMesh(np.zeros((3, 2)), np.array([[0, 1, 3]]))


def test_locate():
    mesh = generate_square_mesh(4)
    e = mesh.locate(0.1, 0.2)
    assert e >= 0
    assert mesh.locate(0.7, 0.0) == -1
