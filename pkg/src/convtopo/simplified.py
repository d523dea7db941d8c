"""Design-gradient surface-convection model used for comparison runs.

Pure conduction plus a volumetric sink h * |grad(gamma_phys)| * (T - T0)
that concentrates on the solid-void interface band of the filtered design:
the gradient magnitude of the physical density acts as an interface-measure
surrogate. Conductivity follows modified SIMP with a constant exponent; the
optimization replaces exponent continuation by a shrinking filter radius.

The element-wise density is projected to nodes by volume-weighted averaging
so the bilinear gradient is meaningful inside elements.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, SetupError
from .mesh import EDGE_NODES, BoundaryConditions, Mesh, edge_length
from .mma import Mma
from .newton import factorize
from .optimize import DesignField, FilterOperator


@dataclass(frozen=True)
class SimplifiedMaterial:
    k_s: float = 100.0
    k_min: float = 1e-6
    p: float = 6.0
    h: float = 0.0
    T0: float = 0.0

    def __post_init__(self):
        if self.k_min <= 0.0:
            raise SetupError("k_min must be positive")
        if self.p < 1.0:
            raise SetupError("SIMP exponent must be >= 1")
        if self.h < 0.0:
            raise SetupError("convection coefficient must be >= 0")


@dataclass(frozen=True)
class FilterContinuation:
    r_min_seq: tuple[float, ...] = (0.48, 0.36, 0.24, 0.12)
    switch_every: int = 50
    obj_change_tol: float = 1e-3
    obj_patience: int = 10
    move_limit: float = 0.2
    v_star: float = 0.5
    max_outer_iter: int = 500

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.r_min_seq, self.r_min_seq[1:])):
            raise SetupError("filter radii must be strictly decreasing")


def simp_conductivity(gamma, mats: SimplifiedMaterial):
    g = np.asarray(gamma, float)
    if np.any(g < 0.0) or np.any(g > 1.0):
        raise AssemblyError("physical density out of [0, 1]")
    return mats.k_min + (mats.k_s - mats.k_min) * g**mats.p


def simp_conductivity_deriv(gamma, mats: SimplifiedMaterial):
    g = np.asarray(gamma, float)
    return mats.p * (mats.k_s - mats.k_min) * g ** (mats.p - 1.0)


class SimplifiedProblem:
    """Scalar heat problem with the design-gradient convection sink."""

    def __init__(self, mesh: Mesh, mats: SimplifiedMaterial, bcs: BoundaryConditions,
                 q_elem: np.ndarray | None = None):
        from .physics import FlowProblem, MaterialSet  # reuse precomputed basis tables

        self.mesh = mesh
        self.mats = mats
        self.bcs = bcs
        self.q_elem = np.zeros(mesh.n_elems) if q_elem is None else np.asarray(q_elem, float)
        base = FlowProblem(mesh, MaterialSet(), bcs)
        self.wg, self.N, self.dNx, self.dNy = base.wg, base.N, base.dNx, base.dNy
        self.lap = base.lap
        self.conn = mesh.elem_nodes
        self.rows16, self.cols16 = base.rows16, base.cols16
        self.load_t = base.load_t  # heat-flux load; also d(psi)/dT

        n = mesh.n_nodes
        self.dir_nodes = np.array(sorted(bcs.dirichlet_t), dtype=int)
        self.dir_vals = np.array([bcs.dirichlet_t[k] for k in self.dir_nodes])
        mask = np.ones(n, dtype=bool)
        mask[self.dir_nodes] = False
        self.free = np.flatnonzero(mask)

        # volume-weighted element-to-node projection (uniform elements: plain
        # average over the touching elements)
        rows = self.conn.ravel()
        cols = np.repeat(np.arange(mesh.n_elems), 4)
        vals = np.full(rows.shape, mesh.elem_volume)
        P = sp.csr_matrix((vals, (rows, cols)), shape=(n, mesh.n_elems))
        wsum = np.asarray(P.sum(axis=1)).ravel()
        self.projection = sp.diags(1.0 / wsum) @ P

    def nodal_density(self, gamma: np.ndarray) -> np.ndarray:
        return self.projection @ gamma


def assemble_simplified(problem: SimplifiedProblem, gamma: np.ndarray):
    """Stiffness (conduction + convective sink) and load for the linear solve.

    Returns (K, f) over all nodes; the system is linear in T so a single
    factorization solves it.
    """
    mats = problem.mats
    g = np.asarray(gamma, float)
    if g.shape != (problem.mesh.n_elems,):
        raise AssemblyError("gamma must have one entry per element")
    kk = simp_conductivity(g, mats)
    gn = problem.nodal_density(g)[problem.conn]  # (E, 4)
    E = problem.mesh.n_elems

    Ke = kk[:, None, None] * problem.lap[None, :, :]
    fe = np.zeros((E, 4))
    for q in range(len(problem.wg)):
        w = problem.wg[q]
        Nq, dNxq, dNyq = problem.N[q], problem.dNx[q], problem.dNy[q]
        grad = np.hypot(gn @ dNxq, gn @ dNyq)  # |grad gamma| at the point
        Ke += (w * mats.h * grad)[:, None, None] * np.outer(Nq, Nq)[None, :, :]
        fe += (w * (mats.h * grad * mats.T0 + problem.q_elem))[:, None] * Nq[None, :]

    n = problem.mesh.n_nodes
    rows, cols = problem.rows16.ravel(), problem.cols16.ravel()
    K = sp.coo_matrix((Ke.reshape(E, 16).ravel(), (rows, cols)), shape=(n, n)).tocsr()
    f = problem.load_t.copy()
    np.add.at(f, problem.conn, fe)
    return K, f


def solve_simplified(problem: SimplifiedProblem, gamma: np.ndarray):
    """Direct solve of the linear system; returns (T, factorized reduced K)."""
    K, f = assemble_simplified(problem, gamma)
    n = problem.mesh.n_nodes
    T = np.zeros(n)
    T[problem.dir_nodes] = problem.dir_vals
    free = problem.free
    rhs = f[free] - K[free][:, problem.dir_nodes] @ problem.dir_vals
    lu = factorize(K[free][:, free])
    T[free] = lu.solve(rhs)
    return T, lu


def simplified_compliance(problem: SimplifiedProblem, T: np.ndarray) -> float:
    if not problem.bcs.flux_t:
        raise SetupError("thermal compliance needs a tagged heat-flux boundary")
    return float(problem.load_t @ T)


def simplified_sensitivities(problem: SimplifiedProblem, T: np.ndarray, adjoint: np.ndarray,
                             gamma: np.ndarray) -> np.ndarray:
    """d(psi)/d(gamma_phys) per element via the adjoint.

    Covers both the conductivity and the interface-measure dependence; the
    latter chains through the element-to-node projection. Points where the
    density gradient vanishes contribute nothing (the norm is flat there).
    """
    mats = problem.mats
    g = np.asarray(gamma, float)
    dk = simp_conductivity_deriv(g, mats)
    gn = problem.nodal_density(g)[problem.conn]
    Te = T[problem.conn]
    lam_e = adjoint[problem.conn]
    n = problem.mesh.n_nodes

    out = np.zeros(problem.mesh.n_elems)
    nodal_acc = np.zeros(n)
    for q in range(len(problem.wg)):
        w = problem.wg[q]
        Nq, dNxq, dNyq = problem.N[q], problem.dNx[q], problem.dNy[q]
        gx = gn @ dNxq
        gy = gn @ dNyq
        grad = np.hypot(gx, gy)
        gtx = Te @ dNxq
        gty = Te @ dNyq
        out += w * dk * np.einsum("ea,ea->e", lam_e, gtx[:, None] * dNxq + gty[:, None] * dNyq)

        lamT = np.einsum("ea,a,e->e", lam_e, Nq, (Te @ Nq) - mats.T0)  # lam . N (T - T0)
        safe = np.where(grad > 1e-300, grad, 1.0)
        sx = np.where(grad > 1e-300, gx / safe, 0.0)
        sy = np.where(grad > 1e-300, gy / safe, 0.0)
        # d|grad|/d(nodal density), weighted by the adjoint sink term
        contrib = (w * mats.h * lamT)[:, None] * (sx[:, None] * dNxq + sy[:, None] * dNyq)
        np.add.at(nodal_acc, problem.conn, contrib)

    out += problem.projection.T @ nodal_acc
    return -out


def average_convection_coefficient(mesh: Mesh, T: np.ndarray, q_n, interface_edges) -> float:
    """Surface average of the local convection coefficient over an interface.

    ``q_n`` is the normal flux per edge (scalar or per-edge array); edges
    where the temperature is not strictly positive are excluded with a
    warning since the local coefficient q_n / T is singular there.
    """
    edges = list(interface_edges)
    if not edges:
        raise SetupError("empty interface edge set")
    qvals = np.broadcast_to(np.asarray(q_n, float), (len(edges),))
    gp = (0.5 * (1.0 - 1.0 / np.sqrt(3.0)), 0.5 * (1.0 + 1.0 / np.sqrt(3.0)))
    total = 0.0
    area = 0.0
    skipped = 0
    for (e, le), qv in zip(edges, qvals):
        n0, n1 = (mesh.elem_nodes[e, a] for a in EDGE_NODES[le])
        L = edge_length(mesh, le)
        T0e, T1e = T[n0], T[n1]
        Tq = [T0e + s * (T1e - T0e) for s in gp]
        if min(Tq) <= 0.0:
            skipped += 1
            continue
        total += sum(0.5 * L * qv / tq for tq in Tq)
        area += L
    if skipped:
        warnings.warn(f"excluded {skipped} interface edges with non-positive temperature")
    if area == 0.0:
        raise SetupError("interface has zero usable area")
    return total / area


@dataclass
class SimplifiedCase:
    name: str
    problem: SimplifiedProblem
    design_elements: np.ndarray
    background_gamma: np.ndarray
    schedule: FilterContinuation
    gamma0: float = 0.5
    report_scale: float = 1.0

    def full_gamma(self, gamma_phys_design):
        full = self.background_gamma.copy()
        full[self.design_elements] = gamma_phys_design
        return full

    def filter_operator(self, r_min: float) -> FilterOperator:
        cents = self.problem.mesh.element_centroids()[self.design_elements]
        vols = np.full(len(self.design_elements), self.problem.mesh.elem_volume)
        return FilterOperator(cents, vols, r_min)


@dataclass
class SimplifiedResult:
    design: DesignField
    history: list
    final_T: np.ndarray

    @property
    def objective(self) -> float:
        return self.history[-1]["psi"] if self.history else float("nan")


def run_simplified_optimization(case: SimplifiedCase) -> SimplifiedResult:
    """Same nested loop as the coupled model, with radius continuation."""
    sched = case.schedule
    n_d = len(case.design_elements)
    gamma = np.full(n_d, case.gamma0, dtype=float)
    mma = Mma(n_d)
    vol = case.problem.mesh.elem_volume
    v_total = vol * n_d
    dg = np.full(n_d, vol / v_total)

    stage = 0
    filt = case.filter_operator(sched.r_min_seq[stage])
    iters_in_stage = 0
    flat_count = 0
    prev_psi = None
    history: list[dict] = []
    T = None

    gamma_phys = filt.apply(gamma)
    if sched.max_outer_iter == 0:
        T, _ = solve_simplified(case.problem, case.full_gamma(gamma_phys))
        psi = simplified_compliance(case.problem, T)
        history.append({"iter": 0, "psi": psi, "constraint": _vol(gamma, vol, v_total, sched),
                        "max_change": 0.0, "stage": stage})
        return SimplifiedResult(DesignField(gamma, gamma_phys, sched.r_min_seq[stage]),
                                history, T)

    for it in range(1, sched.max_outer_iter + 1):
        gamma_phys = filt.apply(gamma)
        full = case.full_gamma(gamma_phys)
        T, lu = solve_simplified(case.problem, full)
        psi = simplified_compliance(case.problem, T)
        lam = np.zeros(case.problem.mesh.n_nodes)
        lam[case.problem.free] = lu.solve(case.problem.load_t[case.problem.free], trans="T")
        dpsi_phys = simplified_sensitivities(case.problem, T, lam, full)
        dpsi = filt.chain(dpsi_phys[case.design_elements])
        gval = _vol(gamma, vol, v_total, sched)
        gamma_new = mma.update(gamma, dpsi, gval, dg, sched.move_limit)
        max_change = float(np.max(np.abs(gamma_new - gamma)))
        gamma = gamma_new
        history.append({"iter": it, "psi": psi, "constraint": gval,
                        "max_change": max_change, "stage": stage})

        if prev_psi is not None and abs(psi - prev_psi) / max(abs(psi), 1e-30) < sched.obj_change_tol:
            flat_count += 1
        else:
            flat_count = 0
        prev_psi = psi
        iters_in_stage += 1
        settled = flat_count >= sched.obj_patience
        if stage == len(sched.r_min_seq) - 1:
            if settled:
                break
        elif settled or iters_in_stage >= sched.switch_every:
            stage += 1
            iters_in_stage = 0
            flat_count = 0
            filt = case.filter_operator(sched.r_min_seq[stage])

    gamma_phys = filt.apply(gamma)
    T, _ = solve_simplified(case.problem, case.full_gamma(gamma_phys))
    psi = simplified_compliance(case.problem, T)
    history.append({"iter": len(history) + 1, "psi": psi,
                    "constraint": _vol(gamma, vol, v_total, sched), "max_change": 0.0,
                    "stage": stage})
    return SimplifiedResult(DesignField(gamma, gamma_phys, sched.r_min_seq[stage]), history, T)


def _vol(gamma, vol, v_total, sched) -> float:
    return float(gamma.sum() * vol / v_total - sched.v_star)
