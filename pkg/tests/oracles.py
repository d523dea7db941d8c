"""Independent oracles for the test suite.

The conduction oracle assembles hand-derived closed-form element matrices
for bilinear rectangles (tensor products of the 1D stiffness and mass
matrices, written out as literal constants) with plain loops and a dense
solve. It shares no code path with the package's assembly.
"""

import numpy as np

# integral of dNa/dx dNb/dx over the rectangle = (hy/hx) * SXX[a,b], CCW nodes
SXX = np.array([
    [2, -2, -1, 1],
    [-2, 2, 1, -1],
    [-1, 1, 2, -2],
    [1, -1, -2, 2],
]) / 6.0

# integral of dNa/dy dNb/dy = (hx/hy) * SYY[a,b]
SYY = np.array([
    [2, 1, -1, -2],
    [1, 2, -2, -1],
    [-1, -2, 2, 1],
    [-2, -1, 1, 2],
]) / 6.0

EDGE_NODES = ((0, 1), (1, 2), (2, 3), (3, 0))


def conduction_element_matrix(hx, hy, k):
    return k * ((hy / hx) * SXX + (hx / hy) * SYY)


def conduction_solve(mesh, k_elem, dirichlet, flux_edges=(), q_elem=None):
    """Dense symmetric conduction solve.

    dirichlet: {node: value}; flux_edges: iterable of (elem, local_edge,
    flux value); q_elem: per-element volumetric source.
    """
    n = mesh.n_nodes
    K = np.zeros((n, n))
    f = np.zeros(n)
    for e in range(mesh.n_elems):
        Ke = conduction_element_matrix(mesh.hx, mesh.hy, k_elem[e])
        nodes = mesh.elem_nodes[e]
        for a in range(4):
            f[nodes[a]] += (0.0 if q_elem is None else q_elem[e]) * mesh.hx * mesh.hy / 4.0
            for b in range(4):
                K[nodes[a], nodes[b]] += Ke[a, b]
    for e, le, val in flux_edges:
        L = mesh.hx if le in (0, 2) else mesh.hy
        for a in EDGE_NODES[le]:
            f[mesh.elem_nodes[e, a]] += val * L / 2.0

    fixed = sorted(dirichlet)
    free = np.setdiff1d(np.arange(n), fixed)
    T = np.zeros(n)
    if fixed:
        vals = np.array([dirichlet[i] for i in fixed])
        T[fixed] = vals
        f_red = f[free] - K[np.ix_(free, fixed)] @ vals
    else:
        f_red = f[free]
    T[free] = np.linalg.solve(K[np.ix_(free, free)], f_red)
    return T
