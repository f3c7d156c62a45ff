import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from porous_duu.mesh import (
    BoundaryTag,
    build_lshape_mesh,
    build_unit_square_mesh,
    refine_uniform,
    write_vtk,
)
from porous_duu.exceptions import MeshResourceError


def euler_characteristic(mesh):
    edges = set()
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edges.add((min(a, b), max(a, b)))
    return mesh.num_vertices - len(edges) + mesh.num_triangles


def test_minimal_square_split():
    mesh = build_unit_square_mesh(1, 1)
    assert mesh.num_vertices == 4
    assert mesh.num_triangles == 2


def test_square_2x2_counts():
    mesh = build_unit_square_mesh(2, 2)
    assert mesh.num_vertices == 9
    assert mesh.num_triangles == 8


def test_square_partition_of_unity_area():
    mesh = build_unit_square_mesh(4, 4)
    assert mesh.total_area() == pytest.approx(1.0, abs=1e-12)


def test_square_all_outer():
    mesh = build_unit_square_mesh(3, 2)
    assert np.all(mesh.facet_tags == int(BoundaryTag.OUTER))


def test_square_invalid_counts():
    with pytest.raises(ValueError):
        build_unit_square_mesh(0, 3)
    with pytest.raises(ValueError):
        build_unit_square_mesh(2, -1)


@given(nx=st.integers(1, 8), ny=st.integers(1, 8))
@settings(max_examples=25, deadline=None)
def test_square_structural_properties(nx, ny):
    mesh = build_unit_square_mesh(nx, ny)
    assert mesh.num_vertices == (nx + 1) * (ny + 1)
    assert mesh.num_triangles == 2 * nx * ny
    assert np.all(mesh.triangle_areas > 0)
    mesh.validate()
    assert euler_characteristic(mesh) == 1


def test_lshape_area():
    mesh = build_lshape_mesh(0.5)
    assert mesh.total_area() == pytest.approx(0.75, abs=1e-12)


def test_lshape_inner_length():
    mesh = build_lshape_mesh(0.25)
    assert mesh.boundary_length(BoundaryTag.INNER) == pytest.approx(1.0, abs=1e-12)


def test_lshape_refinement_triangle_growth():
    coarse = build_lshape_mesh(0.25)
    fine = build_lshape_mesh(0.125)
    ratio = fine.num_triangles / coarse.num_triangles
    assert 2.0 <= ratio <= 4.0


def test_lshape_boundary_partition():
    mesh = build_lshape_mesh(0.125)
    mesh.validate()
    inner = mesh.boundary_length(BoundaryTag.INNER)
    outer = mesh.boundary_length(BoundaryTag.OUTER)
    assert inner + outer == pytest.approx(mesh.boundary_length(), abs=1e-12)
    # L-shape perimeter: 4 outer + two notch edges of length 0.5
    assert inner == pytest.approx(1.0, abs=1e-12)
    assert outer == pytest.approx(3.0, abs=1e-12)


def test_lshape_max_edge_length():
    for h in (0.5, 0.25, 0.1):
        mesh = build_lshape_mesh(h)
        p = mesh.vertices[mesh.triangles]
        edge = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        assert edge.max() <= 1.5 * h + 1e-12


def test_lshape_euler():
    mesh = build_lshape_mesh(0.25)
    assert euler_characteristic(mesh) == 1


def test_lshape_budget_error():
    with pytest.raises(MeshResourceError):
        build_lshape_mesh(1e-4, node_budget=1000)


def test_lshape_invalid_h():
    with pytest.raises(ValueError):
        build_lshape_mesh(0.0)
    with pytest.raises(ValueError):
        build_lshape_mesh(1.5)


def test_refine_square_counts():
    mesh = build_unit_square_mesh(1, 1)
    fine = refine_uniform(mesh)
    assert fine.num_triangles == 8


def test_refine_preserves_area():
    mesh = build_lshape_mesh(0.25)
    fine = refine_uniform(mesh)
    assert fine.total_area() == pytest.approx(mesh.total_area(), abs=1e-12)
    fine.validate()


def test_refine_preserves_inner_length():
    mesh = build_lshape_mesh(0.25)
    fine = refine_uniform(mesh)
    assert fine.boundary_length(BoundaryTag.INNER) == pytest.approx(1.0, abs=1e-12)


def test_vtk_export(tmp_path):
    mesh = build_unit_square_mesh(2, 2)
    path = tmp_path / "mesh.vtk"
    write_vtk(
        mesh,
        path,
        point_data={"field": np.arange(mesh.num_vertices, dtype=float)},
        point_vectors={"disp": np.zeros((mesh.num_vertices, 2))},
    )
    text = path.read_text()
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert f"POINTS {mesh.num_vertices} double" in text
    assert "SCALARS field double 1" in text
    assert "VECTORS disp double" in text
