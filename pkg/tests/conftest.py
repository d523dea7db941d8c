import numpy as np
import pytest

from convtopo.mesh import BoundaryConditions, build_structured_mesh, tag_boundary, tag_corner
from convtopo.physics import FlowProblem, MaterialSet


def make_mini_heatsink(
    nx=10,
    ny=10,
    beta=640.0,
    heater_span=(0.0, 0.2),
    heater_flux=1.0,
    mobility_fluid=0.09,
    mobility_solid=1e-7,
    p_k=2.0,
    p_mobility=8.0,
    q_elem=None,
    pressure_pin=0.0,
):
    """Unit-square analogue of the heat-sink setup for cheap tests.

    Heater strip on the bottom, T = 0 on the right and top walls, insulated
    bottom and left (symmetry-like), pressure pinned at the top-right
    corner. With H = 1 the a-priori Grashof number equals beta.
    """
    mesh = build_structured_mesh(nx, ny, 1.0, 1.0)
    sets = [
        tag_boundary(mesh, "bottom", heater_span, "flux_T", heater_flux, "heater"),
        tag_boundary(mesh, "right", (0.0, 1.0), "dirichlet_T", 0.0, "right"),
        tag_boundary(mesh, "top", (0.0, 1.0), "dirichlet_T", 0.0, "top"),
        tag_corner(mesh, "top-right", "dirichlet_P", pressure_pin, "gauge"),
    ]
    bcs = BoundaryConditions(mesh, sets)
    mats = MaterialSet(
        beta=beta,
        mobility_fluid=mobility_fluid,
        mobility_solid=mobility_solid,
        p_k=p_k,
        p_mobility=p_mobility,
    )
    return FlowProblem(mesh, mats, bcs, q_elem=q_elem)


@pytest.fixture
def mini_heatsink():
    return make_mini_heatsink()


@pytest.fixture
def rng():
    return np.random.default_rng(42)
