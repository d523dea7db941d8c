"""Adjoint sensitivities of the thermal compliance.

One transposed solve with the converged tangent gives the adjoint vector;
the design gradient is the negative contraction of the adjoint with the
design derivative of the residual, chain-ruled through the density filter
when one is active. The stabilization parameter is held frozen on both the
forward and the adjoint side, so finite-difference checks must freeze it
too.
"""

from __future__ import annotations

import numpy as np

from .errors import AssemblyError, SetupError
from .newton import factorize
from .physics import FlowProblem, State, residual_design_derivative, tangent_matrix


def thermal_compliance(problem: FlowProblem, state: State) -> float:
    """Heat-flux-weighted boundary temperature integral, f_t . t."""
    if not problem.bcs.flux_t:
        raise SetupError("thermal compliance needs a tagged heat-flux boundary")
    return float(problem.load_t @ state.t)


def solve_adjoint(problem: FlowProblem, state: State, gamma, dpsi_ds: np.ndarray | None = None):
    """Adjoint vector for the compliance (or a supplied objective gradient).

    Returns the packed adjoint with zeros at Dirichlet DOFs; those DOFs do
    not move with the design, so they drop out of the sensitivity.
    """
    n = problem.mesh.n_nodes
    if dpsi_ds is None:
        dpsi_ds = np.concatenate([np.zeros(n), problem.thermal_load_vector()])
    if dpsi_ds.shape != (2 * n,):
        raise AssemblyError("objective gradient must be a packed 2n vector")
    free = problem.free_idx
    K = tangent_matrix(problem, state, gamma)
    lu = factorize(K[free][:, free])
    lam = np.zeros(2 * n)
    lam[free] = lu.solve(dpsi_ds[free], trans="T")
    return lam


def compliance_sensitivities(
    problem: FlowProblem,
    state: State,
    adjoint: np.ndarray,
    gamma,
    filter_op=None,
    design_elements: np.ndarray | None = None,
):
    """Compliance and volume gradients per design variable.

    ``gamma`` is the full-mesh physical density the state was solved at.
    With a filter operator the PDE-level gradient (w.r.t. the physical
    field on the design subdomain) is pulled back to the raw variables.
    Returns (dpsi_dgamma, dvol_dgamma) over the design elements.
    """
    dpsi_phys = -residual_design_derivative(problem, state, gamma, adjoint)
    if design_elements is not None:
        dpsi_phys = dpsi_phys[design_elements]
    if filter_op is not None:
        dpsi = filter_op.chain(dpsi_phys)
    else:
        dpsi = dpsi_phys
    dvol = np.full(dpsi.shape, problem.mesh.elem_volume)
    return dpsi, dvol
