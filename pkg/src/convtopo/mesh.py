"""Structured quadrilateral meshes, bilinear basis and boundary tagging.

Node numbering is row-major from the bottom-left corner with the y axis
pointing up, so gravity (0, -1) points "down" in mesh coordinates. Elements
are uniform rectangles with counter-clockwise connectivity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SetupError

# local edges of an element, CCW: bottom, right, top, left
EDGE_NODES = ((0, 1), (1, 2), (2, 3), (3, 0))

SIDES = ("bottom", "right", "top", "left")

BC_KINDS = ("dirichlet_T", "flux_T", "dirichlet_P", "flux_u")


@dataclass(frozen=True)
class Mesh:
    """Uniform structured grid of bilinear quadrilaterals."""

    nx: int
    ny: int
    width: float
    height: float
    node_coords: np.ndarray  # (n_nodes, 2)
    elem_nodes: np.ndarray  # (n_elems, 4), CCW
    elem_size: tuple[float, float]

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elems(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        return self.elem_size[0]

    @property
    def hy(self) -> float:
        return self.elem_size[1]

    @property
    def elem_volume(self) -> float:
        """Element area (unit out-of-plane thickness)."""
        return self.hx * self.hy

    def node_id(self, i: int, j: int) -> int:
        return j * (self.nx + 1) + i

    def elem_id(self, i: int, j: int) -> int:
        return j * self.nx + i

    def element_centroids(self) -> np.ndarray:
        """Centroid coordinates, shape (n_elems, 2)."""
        i = np.arange(self.nx)
        j = np.arange(self.ny)
        cx = (i + 0.5) * self.hx
        cy = (j + 0.5) * self.hy
        X, Y = np.meshgrid(cx, cy)
        return np.column_stack([X.ravel(), Y.ravel()])


def build_structured_mesh(nx: int, ny: int, width: float, height: float) -> Mesh:
    """Build an nx-by-ny grid of rectangles over [0, width] x [0, height]."""
    if nx < 1 or ny < 1:
        raise SetupError(f"element counts must be >= 1, got ({nx}, {ny})")
    if width <= 0.0 or height <= 0.0:
        raise SetupError(f"domain extents must be > 0, got ({width}, {height})")
    hx = width / nx
    hy = height / ny
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    coords = np.column_stack([X.ravel(), Y.ravel()])

    i = np.arange(nx)
    j = np.arange(ny)
    I, J = np.meshgrid(i, j)
    n0 = J.ravel() * (nx + 1) + I.ravel()
    elem = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])

    coords.setflags(write=False)
    elem.setflags(write=False)
    return Mesh(nx, ny, width, height, coords, elem, (hx, hy))


def shape_eval(xi: float, eta: float):
    """Bilinear basis values and reference-space gradients at (xi, eta).

    Returns (N, dN) with N shape (4,) and dN shape (4, 2) ordered CCW from
    the (-1, -1) corner.
    """
    sx = np.array([-1.0, 1.0, 1.0, -1.0])
    sy = np.array([-1.0, -1.0, 1.0, 1.0])
    N = 0.25 * (1.0 + sx * xi) * (1.0 + sy * eta)
    dN = np.column_stack([0.25 * sx * (1.0 + sy * eta), 0.25 * sy * (1.0 + sx * xi)])
    return N, dN


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (k, 2) in [-1, 1]^2
    weights: np.ndarray  # (k,)

    def __post_init__(self):
        if not np.isclose(self.weights.sum(), 4.0, rtol=1e-12):
            raise SetupError("quadrature weights must sum to the reference area 4")


def gauss_2x2() -> QuadRule:
    a = 1.0 / np.sqrt(3.0)
    pts = np.array([[-a, -a], [a, -a], [a, a], [-a, a]])
    return QuadRule(pts, np.ones(4))


@dataclass(frozen=True)
class BoundarySet:
    """A tagged set of boundary edges (or a single pinned node).

    ``edges`` holds (element, local_edge) pairs; ``nodes`` the touched node
    ids. Point tags (zero-length span) carry one node and no edges.
    """

    name: str
    kind: str
    value: float
    edges: tuple[tuple[int, int], ...]
    nodes: tuple[int, ...]


def _side_edges(mesh: Mesh, side: str):
    """All (element, local_edge, midpoint_coord) triples on a side."""
    if side == "bottom":
        idx = [(mesh.elem_id(i, 0), 0, (i + 0.5) * mesh.hx) for i in range(mesh.nx)]
    elif side == "top":
        idx = [(mesh.elem_id(i, mesh.ny - 1), 2, (i + 0.5) * mesh.hx) for i in range(mesh.nx)]
    elif side == "left":
        idx = [(mesh.elem_id(0, j), 3, (j + 0.5) * mesh.hy) for j in range(mesh.ny)]
    elif side == "right":
        idx = [(mesh.elem_id(mesh.nx - 1, j), 1, (j + 0.5) * mesh.hy) for j in range(mesh.ny)]
    else:
        raise SetupError(f"unknown side {side!r}, expected one of {SIDES}")
    return idx


def _side_node(mesh: Mesh, side: str, coord: float) -> int:
    """Boundary node on a side nearest to the given 1D coordinate."""
    if side in ("bottom", "top"):
        i = int(round(coord / mesh.hx))
        i = min(max(i, 0), mesh.nx)
        j = 0 if side == "bottom" else mesh.ny
        return mesh.node_id(i, j)
    j = int(round(coord / mesh.hy))
    j = min(max(j, 0), mesh.ny)
    i = 0 if side == "left" else mesh.nx
    return mesh.node_id(i, j)


def tag_boundary(
    mesh: Mesh,
    side: str,
    span: tuple[float, float],
    kind: str,
    value: float,
    name: str = "",
) -> BoundarySet:
    """Tag boundary edges of one side whose midpoints fall inside ``span``.

    A zero-length span pins the nearest boundary node instead (only valid
    for Dirichlet kinds, e.g. the pressure gauge corner).
    """
    if kind not in BC_KINDS:
        raise SetupError(f"unknown boundary kind {kind!r}, expected one of {BC_KINDS}")
    lo, hi = float(span[0]), float(span[1])
    if hi < lo:
        raise SetupError(f"span must be ordered, got ({lo}, {hi})")
    extent = mesh.width if side in ("bottom", "top") else mesh.height
    eps = 1e-12 * max(1.0, extent)
    if lo < -eps or hi > extent + eps:
        raise SetupError(f"span ({lo}, {hi}) falls outside side {side!r} of extent {extent}")

    if hi == lo:
        if not kind.startswith("dirichlet"):
            raise SetupError("point tags only make sense for Dirichlet kinds")
        node = _side_node(mesh, side, lo)
        return BoundarySet(name or f"{side}-point", kind, float(value), (), (node,))

    edges = tuple(
        (e, le) for e, le, mid in _side_edges(mesh, side) if lo - eps <= mid <= hi + eps
    )
    if not edges:
        raise SetupError(f"span ({lo}, {hi}) on side {side!r} selects no boundary edges")
    nodes = sorted(
        {int(mesh.elem_nodes[e, a]) for e, le in edges for a in EDGE_NODES[le]}
    )
    return BoundarySet(name or side, kind, float(value), edges, tuple(nodes))


def tag_corner(mesh: Mesh, corner: str, kind: str, value: float, name: str = "") -> BoundarySet:
    """Pin a single corner node; corner is e.g. 'top-right' or 'bottom-left'."""
    vert, horiz = corner.split("-")
    j = {"bottom": 0, "top": mesh.ny}[vert]
    i = {"left": 0, "right": mesh.nx}[horiz]
    if not kind.startswith("dirichlet"):
        raise SetupError("corner tags only make sense for Dirichlet kinds")
    node = mesh.node_id(i, j)
    return BoundarySet(name or corner, kind, float(value), (), (node,))


def edge_length(mesh: Mesh, local_edge: int) -> float:
    return mesh.hx if local_edge in (0, 2) else mesh.hy


class BoundaryConditions:
    """Consolidated, conflict-checked boundary data for one problem.

    Dirichlet values are stored per node and field; a node carrying two
    different Dirichlet values for the same field is rejected at setup.
    """

    def __init__(self, mesh: Mesh, sets):
        self.mesh = mesh
        self.sets = tuple(sets)
        self.dirichlet_p: dict[int, float] = {}
        self.dirichlet_t: dict[int, float] = {}
        self.flux_t: list[tuple[int, int, float]] = []
        self.flux_u: list[tuple[int, int, float]] = []
        for bs in self.sets:
            if bs.kind == "dirichlet_P":
                self._add_dirichlet(self.dirichlet_p, bs, "P")
            elif bs.kind == "dirichlet_T":
                self._add_dirichlet(self.dirichlet_t, bs, "T")
            elif bs.kind == "flux_T":
                self.flux_t.extend((e, le, bs.value) for e, le in bs.edges)
            elif bs.kind == "flux_u":
                self.flux_u.extend((e, le, bs.value) for e, le in bs.edges)
            else:
                raise SetupError(f"unknown boundary kind {bs.kind!r}")

    @staticmethod
    def _add_dirichlet(table, bs: BoundarySet, field: str):
        for n in bs.nodes:
            if n in table and table[n] != bs.value:
                raise SetupError(
                    f"node {n} already carries {field}={table[n]}, "
                    f"conflicting tag {bs.name!r} wants {bs.value}"
                )
            table[n] = bs.value

    def free_mask(self) -> np.ndarray:
        """Boolean mask over the packed (pressure; temperature) DOF vector."""
        n = self.mesh.n_nodes
        mask = np.ones(2 * n, dtype=bool)
        for node in self.dirichlet_p:
            mask[node] = False
        for node in self.dirichlet_t:
            mask[n + node] = False
        return mask

    def scaled_flux(self, factor: float) -> "BoundaryConditions":
        """Copy with all prescribed heat-flux values multiplied by ``factor``."""
        new_sets = []
        for bs in self.sets:
            if bs.kind == "flux_T":
                new_sets.append(
                    BoundarySet(bs.name, bs.kind, bs.value * factor, bs.edges, bs.nodes)
                )
            else:
                new_sets.append(bs)
        return BoundaryConditions(self.mesh, new_sets)
