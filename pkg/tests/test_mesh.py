import numpy as np
import pytest

from convtopo.errors import SetupError
from convtopo.mesh import (
    BoundaryConditions,
    build_structured_mesh,
    gauss_2x2,
    shape_eval,
    tag_boundary,
    tag_corner,
)


def test_small_mesh_counts():
    mesh = build_structured_mesh(2, 2, 1.0, 1.0)
    assert mesh.n_nodes == 9
    assert mesh.n_elems == 4
    assert mesh.elem_size == (0.5, 0.5)


def test_paper_resolutions():
    # r_min = 0.06 at 2.4 elements -> h = 0.025 on the 280x160 grid
    mesh = build_structured_mesh(280, 160, 7.0, 4.0)
    assert mesh.hx == pytest.approx(0.025, rel=1e-14)
    assert mesh.hy == pytest.approx(0.025, rel=1e-14)
    # r_min = 0.08 at 2.4 elements -> h = 1/30 on the 120x240 grid
    mesh = build_structured_mesh(120, 240, 4.0, 8.0)
    assert mesh.hx == pytest.approx(1.0 / 30.0, rel=1e-14)
    assert mesh.hy == pytest.approx(1.0 / 30.0, rel=1e-14)


def test_node_numbering_row_major():
    mesh = build_structured_mesh(3, 2, 3.0, 2.0)
    assert np.allclose(mesh.node_coords[0], [0.0, 0.0])
    assert np.allclose(mesh.node_coords[3], [3.0, 0.0])
    assert np.allclose(mesh.node_coords[4], [0.0, 1.0])
    # CCW connectivity of element (0, 0)
    assert mesh.elem_nodes[0].tolist() == [0, 1, 5, 4]


@pytest.mark.parametrize("nx,ny,w,h", [(0, 2, 1, 1), (2, -1, 1, 1), (2, 2, 0, 1), (2, 2, 1, -3)])
def test_invalid_mesh_rejected(nx, ny, w, h):
    with pytest.raises(SetupError):
        build_structured_mesh(nx, ny, w, h)


def test_shape_functions_nodal_and_centroid():
    N, _ = shape_eval(0.0, 0.0)
    assert np.allclose(N, 0.25)
    N, _ = shape_eval(-1.0, -1.0)
    assert np.allclose(N, [1.0, 0.0, 0.0, 0.0])


def test_partition_of_unity_random_points():
    rng = np.random.default_rng(0)
    for xi, eta in rng.uniform(-1.0, 1.0, (50, 2)):
        N, dN = shape_eval(xi, eta)
        assert np.isclose(N.sum(), 1.0, atol=1e-14)
        assert np.allclose(dN.sum(axis=0), 0.0, atol=1e-14)


def test_quadrature_weights_and_area():
    rule = gauss_2x2()
    assert rule.weights.sum() == pytest.approx(4.0)
    mesh = build_structured_mesh(7, 3, 2.5, 1.5)
    # constant-Jacobian elements: sum of w * detJ over all elements = area
    detJ = mesh.hx * mesh.hy / 4.0
    area = mesh.n_elems * (rule.weights * detJ).sum()
    assert area == pytest.approx(mesh.width * mesh.height, rel=1e-12)


def test_tag_boundary_full_and_partial():
    mesh = build_structured_mesh(4, 4, 1.0, 1.0)
    full = tag_boundary(mesh, "bottom", (0.0, 1.0), "flux_T", 0.0)
    assert len(full.edges) == 4
    heater = tag_boundary(mesh, "bottom", (0.25, 0.75), "flux_T", 110.0)
    assert len(heater.edges) == 2
    assert all(le == 0 for _, le in heater.edges)


def test_tag_boundary_idempotent():
    mesh = build_structured_mesh(5, 3, 2.0, 1.0)
    a = tag_boundary(mesh, "left", (0.0, 1.0), "dirichlet_T", 1.5)
    b = tag_boundary(mesh, "left", (0.0, 1.0), "dirichlet_T", 1.5)
    assert a.edges == b.edges and a.nodes == b.nodes


def test_tag_corner_pressure_gauge():
    mesh = build_structured_mesh(4, 4, 1.0, 1.0)
    pin = tag_corner(mesh, "top-right", "dirichlet_P", 0.0)
    assert pin.nodes == (mesh.n_nodes - 1,)
    assert pin.edges == ()


def test_empty_selection_rejected():
    mesh = build_structured_mesh(4, 4, 1.0, 1.0)
    with pytest.raises(SetupError):
        tag_boundary(mesh, "bottom", (0.26, 0.26 + 1e-9), "flux_T", 1.0)


def test_span_outside_side_rejected():
    mesh = build_structured_mesh(4, 4, 1.0, 1.0)
    with pytest.raises(SetupError):
        tag_boundary(mesh, "bottom", (0.5, 1.5), "flux_T", 1.0)


def test_dirichlet_conflict_rejected():
    mesh = build_structured_mesh(4, 4, 1.0, 1.0)
    a = tag_boundary(mesh, "left", (0.0, 1.0), "dirichlet_T", 0.0)
    b = tag_boundary(mesh, "bottom", (0.0, 1.0), "dirichlet_T", 2.0)  # shares corner
    with pytest.raises(SetupError):
        BoundaryConditions(mesh, [a, b])


def test_dirichlet_same_value_ok():
    mesh = build_structured_mesh(4, 4, 1.0, 1.0)
    a = tag_boundary(mesh, "left", (0.0, 1.0), "dirichlet_T", 0.0)
    b = tag_boundary(mesh, "bottom", (0.0, 1.0), "dirichlet_T", 0.0)
    bcs = BoundaryConditions(mesh, [a, b])
    assert len(bcs.dirichlet_t) == 9  # 5 + 5 minus shared corner
