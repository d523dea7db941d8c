"""Coupled pressure/temperature physics on a structured quad mesh.

The flow model gives the velocity explicitly from pressure and temperature,

    u = -mobility(gamma) * (grad P + rho0*beta*(T - T0)*g),

with the pressure governed by the divergence-free condition (a Poisson
equation with the buoyancy forcing inside the same flux) and the temperature
by a SUPG-stabilized convection-diffusion equation. Velocities are evaluated
at element centroids and are element-wise constant, as is the design field.

Unknowns are packed as s = {p; t} (pressure DOFs first), 2 per node.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, SetupError
from .mesh import EDGE_NODES, BoundaryConditions, Mesh, edge_length, gauss_2x2, shape_eval


@dataclass(frozen=True)
class MaterialSet:
    """Material data for the coupled model.

    ``mobility_*`` is the reciprocal of the flow-resistance parameter of the
    reduced-order model (units m^2 s / Pa); the solid value is small but
    finite. ``p_k`` and ``p_mobility`` are the penalization exponents of the
    two interpolations.
    """

    rho0: float = 1.0
    cp: float = 1.0
    beta: float = 100.0
    k_f: float = 1.0
    k_s: float = 100.0
    mobility_fluid: float = 0.09
    mobility_solid: float = 1e-7
    T0: float = 0.0
    g: tuple[float, float] = (0.0, -1.0)
    Q0: float = 0.0
    p_k: float = 16.0
    p_mobility: float = 20.0

    def __post_init__(self):
        if self.k_f <= 0.0 or self.k_s <= 0.0:
            raise SetupError("conductivities must be positive")
        # equality is allowed so an all-zero mobility can emulate pure conduction
        if not (self.mobility_fluid >= self.mobility_solid >= 0.0):
            raise SetupError("need mobility_fluid >= mobility_solid >= 0")
        if self.p_k < 1.0 or self.p_mobility < 1.0:
            raise SetupError("penalization exponents must be >= 1")


@dataclass
class State:
    """Nodal solution: pressure and temperature vectors of equal length."""

    p: np.ndarray
    t: np.ndarray

    def packed(self) -> np.ndarray:
        return np.concatenate([self.p, self.t])

    def copy(self) -> "State":
        return State(self.p.copy(), self.t.copy())

    @staticmethod
    def zeros(n_nodes: int) -> "State":
        return State(np.zeros(n_nodes), np.zeros(n_nodes))


@dataclass(frozen=True)
class DimensionlessGroups:
    Gr: float
    Ra: float
    Pr: float
    deltaT_ref: float
    H: float


def dimensionless_groups(mats: MaterialSet, H: float, deltaT: float = 1.0) -> DimensionlessGroups:
    """Grashof/Rayleigh/Prandtl bookkeeping with the reference viscosity 1."""
    mu = 1.0
    gmag = float(np.hypot(*mats.g))
    Gr = gmag * mats.beta * deltaT * H**3 * mats.rho0**2 / mu**2
    Pr = mats.cp * mu / mats.k_f
    return DimensionlessGroups(Gr=Gr, Ra=Gr * Pr, Pr=Pr, deltaT_ref=deltaT, H=H)


def _check_gamma(gamma):
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0.0) or np.any(g > 1.0):
        raise AssemblyError("physical density out of [0, 1]")
    return g


def mobility(gamma, mats: MaterialSet):
    """Interpolated flow mobility; fluid value at 0, solid value at 1."""
    g = _check_gamma(gamma)
    return mats.mobility_solid + (1.0 - g) ** mats.p_mobility * (
        mats.mobility_fluid - mats.mobility_solid
    )


def mobility_deriv(gamma, mats: MaterialSet):
    g = _check_gamma(gamma)
    return (
        -mats.p_mobility
        * (1.0 - g) ** (mats.p_mobility - 1.0)
        * (mats.mobility_fluid - mats.mobility_solid)
    )


def conductivity(gamma, mats: MaterialSet):
    """Interpolated conductivity; fluid value at 0, solid value at 1."""
    g = _check_gamma(gamma)
    return mats.k_f + g**mats.p_k * (mats.k_s - mats.k_f)


def conductivity_deriv(gamma, mats: MaterialSet):
    g = _check_gamma(gamma)
    return mats.p_k * g ** (mats.p_k - 1.0) * (mats.k_s - mats.k_f)


def stabilization_tau(speed, h: float, nu):
    """SUPG stabilization parameter from element size, speed and diffusivity."""
    return ((2.0 * speed / h) ** 2 + 9.0 * (4.0 * nu / h**2) ** 2) ** -0.5


class FlowProblem:
    """Mesh + materials + boundary conditions, with precomputed element data.

    Immutable once built; assembly routines are free functions taking the
    problem plus a state and a per-element physical density.
    """

    def __init__(
        self,
        mesh: Mesh,
        mats: MaterialSet,
        bcs: BoundaryConditions,
        q_elem: np.ndarray | None = None,
        tau_diffusivity: str = "thermal",
    ):
        if tau_diffusivity not in ("thermal", "kinematic"):
            raise SetupError(f"unknown tau diffusivity mode {tau_diffusivity!r}")
        self.mesh = mesh
        self.mats = mats
        self.bcs = bcs
        self.tau_diffusivity = tau_diffusivity
        self.q_elem = np.zeros(mesh.n_elems) if q_elem is None else np.asarray(q_elem, float)
        if self.q_elem.shape != (mesh.n_elems,):
            raise AssemblyError("q_elem must have one entry per element")

        hx, hy = mesh.elem_size
        rule = gauss_2x2()
        npts = len(rule.weights)
        self.wg = rule.weights * (hx * hy / 4.0)  # physical quadrature weights
        self.N = np.empty((npts, 4))
        self.dNx = np.empty((npts, 4))
        self.dNy = np.empty((npts, 4))
        for q, (xi, eta) in enumerate(rule.points):
            Nq, dNq = shape_eval(xi, eta)
            self.N[q] = Nq
            self.dNx[q] = dNq[:, 0] * (2.0 / hx)
            self.dNy[q] = dNq[:, 1] * (2.0 / hy)
        Nc, dNc = shape_eval(0.0, 0.0)
        self.Nc = Nc
        self.dNxc = dNc[:, 0] * (2.0 / hx)
        self.dNyc = dNc[:, 1] * (2.0 / hy)

        # constant element Laplacian template: sum_q w_q grad(Na).grad(Nb)
        self.lap = sum(
            w * (np.outer(gx, gx) + np.outer(gy, gy))
            for w, gx, gy in zip(self.wg, self.dNx, self.dNy)
        )

        conn = mesh.elem_nodes
        self.conn = conn
        self.rows16 = np.repeat(conn, 4, axis=1)  # (E, 16): a index
        self.cols16 = np.tile(conn, (1, 4))  # (E, 16): b index

        self.free = bcs.free_mask()
        self.free_idx = np.flatnonzero(self.free)
        n = mesh.n_nodes
        self.dir_p_nodes = np.array(sorted(bcs.dirichlet_p), dtype=int)
        self.dir_p_vals = np.array([bcs.dirichlet_p[k] for k in self.dir_p_nodes])
        self.dir_t_nodes = np.array(sorted(bcs.dirichlet_t), dtype=int)
        self.dir_t_vals = np.array([bcs.dirichlet_t[k] for k in self.dir_t_nodes])

        # constant boundary-flux loads
        self.load_p = np.zeros(n)
        self.load_t = np.zeros(n)
        for e, le, val in bcs.flux_u:
            L = edge_length(mesh, le)
            for a in EDGE_NODES[le]:
                self.load_p[conn[e, a]] += val * L / 2.0
        for e, le, val in bcs.flux_t:
            L = edge_length(mesh, le)
            for a in EDGE_NODES[le]:
                self.load_t[conn[e, a]] += val * L / 2.0

    # --- convenience -----------------------------------------------------
    @property
    def n_dofs(self) -> int:
        return 2 * self.mesh.n_nodes

    def thermal_load_vector(self) -> np.ndarray:
        """Assembled heat-flux load; also d(psi)/dt for thermal compliance."""
        return self.load_t.copy()

    def apply_dirichlet(self, state: State) -> State:
        state.p[self.dir_p_nodes] = self.dir_p_vals
        state.t[self.dir_t_nodes] = self.dir_t_vals
        return state

    def initial_state(self) -> State:
        return self.apply_dirichlet(State.zeros(self.mesh.n_nodes))

    def scaled(self, parameter: str, factor: float) -> "FlowProblem":
        """Copy with the heat flux or the buoyancy coefficient scaled."""
        if parameter == "q_h":
            return FlowProblem(
                self.mesh, self.mats, self.bcs.scaled_flux(factor), self.q_elem,
                self.tau_diffusivity,
            )
        if parameter == "beta":
            return FlowProblem(
                self.mesh, replace(self.mats, beta=self.mats.beta * factor),
                self.bcs, self.q_elem, self.tau_diffusivity,
            )
        raise SetupError(f"unknown ramp parameter {parameter!r}")


def _element_fields(problem: FlowProblem, state: State, gamma):
    """Gathered element DOFs plus mobility/conductivity/velocity/tau arrays."""
    mats = problem.mats
    conn = problem.conn
    if state.p.shape[0] != problem.mesh.n_nodes or state.t.shape[0] != problem.mesh.n_nodes:
        raise AssemblyError("state vectors must have one entry per node")
    g = np.asarray(gamma, float)
    if g.shape != (problem.mesh.n_elems,):
        raise AssemblyError("gamma must have one entry per element")
    Pe = state.p[conn]
    Te = state.t[conn]
    mob = mobility(g, mats)
    kk = conductivity(g, mats)
    gx, gy = mats.g
    mx = Pe @ problem.dNxc + mats.rho0 * mats.beta * (Te @ problem.Nc - mats.T0) * gx
    my = Pe @ problem.dNyc + mats.rho0 * mats.beta * (Te @ problem.Nc - mats.T0) * gy
    ux = -mob * mx
    uy = -mob * my
    return Pe, Te, mob, kk, (mx, my), (ux, uy)


def element_velocities(problem: FlowProblem, state: State, gamma) -> np.ndarray:
    """Centroid velocities, shape (n_elems, 2)."""
    *_, (ux, uy) = _element_fields(problem, state, gamma)
    return np.column_stack([ux, uy])


def element_tau(problem: FlowProblem, gamma, speed) -> np.ndarray:
    mats = problem.mats
    kk = conductivity(np.asarray(gamma, float), mats)
    if problem.tau_diffusivity == "thermal":
        nu = kk / (mats.rho0 * mats.cp)
    else:
        nu = np.full_like(kk, 1.0 / mats.rho0)  # reference viscosity 1
    return stabilization_tau(speed, problem.mesh.hx, nu)


def residual_vector(
    problem: FlowProblem, state: State, gamma, frozen_tau: np.ndarray | None = None
) -> np.ndarray:
    """Unreduced residual of the coupled system, packed {R_p; R_t}.

    ``frozen_tau`` overrides the per-element stabilization parameter; the
    Newton tangent and the finite-difference oracles rely on tau being held
    fixed while the state varies.
    """
    mats = problem.mats
    Pe, Te, mob, kk, _, (ux, uy) = _element_fields(problem, state, gamma)
    tau = (
        frozen_tau
        if frozen_tau is not None
        else element_tau(problem, gamma, np.hypot(ux, uy))
    )
    rc = mats.rho0 * mats.cp
    gx, gy = mats.g
    Rp_e = np.zeros_like(Pe)
    Rt_e = np.zeros_like(Te)
    for q in range(len(problem.wg)):
        w = problem.wg[q]
        Nq, dNxq, dNyq = problem.N[q], problem.dNx[q], problem.dNy[q]
        gpx = Pe @ dNxq
        gpy = Pe @ dNyq
        gtx = Te @ dNxq
        gty = Te @ dNyq
        Tq = Te @ Nq
        fx = gpx + mats.rho0 * mats.beta * (Tq - mats.T0) * gx
        fy = gpy + mats.rho0 * mats.beta * (Tq - mats.T0) * gy
        Rp_e += (w * mob)[:, None] * (fx[:, None] * dNxq + fy[:, None] * dNyq)

        conv = ux * gtx + uy * gty
        wstar = Nq[None, :] + tau[:, None] * (ux[:, None] * dNxq + uy[:, None] * dNyq)
        Rt_e += (w * rc * conv)[:, None] * wstar
        Rt_e += (w * kk)[:, None] * (gtx[:, None] * dNxq + gty[:, None] * dNyq)
        Rt_e -= (w * problem.q_elem)[:, None] * wstar

    n = problem.mesh.n_nodes
    R = np.zeros(2 * n)
    np.add.at(R[:n], problem.conn, Rp_e)
    np.add.at(R[n:], problem.conn, Rt_e)
    R[:n] -= problem.load_p
    R[n:] -= problem.load_t
    return R


def tangent_matrix(
    problem: FlowProblem, state: State, gamma, frozen_tau: np.ndarray | None = None
) -> sp.csr_matrix:
    """Unreduced tangent dR/ds at the given state (tau held frozen).

    The velocity's dependence on pressure and temperature is differentiated
    everywhere it appears (convective term and SUPG weight); the dependence
    of tau on the velocity is not.
    """
    mats = problem.mats
    Pe, Te, mob, kk, _, (ux, uy) = _element_fields(problem, state, gamma)
    tau = (
        frozen_tau
        if frozen_tau is not None
        else element_tau(problem, gamma, np.hypot(ux, uy))
    )
    rc = mats.rho0 * mats.cp
    gx, gy = mats.g
    E = problem.mesh.n_elems

    # velocity derivatives w.r.t. element DOFs: (E, 4) each
    dux_dP = -mob[:, None] * problem.dNxc[None, :]
    duy_dP = -mob[:, None] * problem.dNyc[None, :]
    cT = -mob * mats.rho0 * mats.beta
    dux_dT = (cT * gx)[:, None] * problem.Nc[None, :]
    duy_dT = (cT * gy)[:, None] * problem.Nc[None, :]

    Kpp = mob[:, None, None] * problem.lap[None, :, :]
    KpT = np.zeros((E, 4, 4))
    KtP = np.zeros((E, 4, 4))
    KtT = kk[:, None, None] * problem.lap[None, :, :]

    for q in range(len(problem.wg)):
        w = problem.wg[q]
        Nq, dNxq, dNyq = problem.N[q], problem.dNx[q], problem.dNy[q]
        gtx = Te @ dNxq
        gty = Te @ dNyq
        conv = ux * gtx + uy * gty
        wstar = Nq[None, :] + tau[:, None] * (ux[:, None] * dNxq + uy[:, None] * dNyq)

        # buoyancy forcing in the pressure equation
        gdotNa = gx * dNxq + gy * dNyq  # (4,)
        KpT += (w * mob * mats.rho0 * mats.beta)[:, None, None] * (
            gdotNa[None, :, None] * Nq[None, None, :]
        )

        # d(u . grad T)/dT_b and /dP_b
        u_gradNb = ux[:, None] * dNxq + uy[:, None] * dNyq  # (E, 4)
        dconv_dT = u_gradNb + dux_dT * gtx[:, None] + duy_dT * gty[:, None]
        dconv_dP = dux_dP * gtx[:, None] + duy_dP * gty[:, None]

        # d(wstar_a)/ds_b contracted against conv and the source
        dw_gradNa_T = (
            dNxq[None, :, None] * dux_dT[:, None, :] + dNyq[None, :, None] * duy_dT[:, None, :]
        )
        dw_gradNa_P = (
            dNxq[None, :, None] * dux_dP[:, None, :] + dNyq[None, :, None] * duy_dP[:, None, :]
        )
        scale = w * (rc * conv - problem.q_elem) * tau
        KtT += w * rc * np.einsum("ea,eb->eab", wstar, dconv_dT)
        KtT += scale[:, None, None] * dw_gradNa_T
        KtP += w * rc * np.einsum("ea,eb->eab", wstar, dconv_dP)
        KtP += scale[:, None, None] * dw_gradNa_P

    n = problem.mesh.n_nodes
    rows = problem.rows16.ravel()
    cols = problem.cols16.ravel()
    data = np.concatenate([Kpp.reshape(E, 16).ravel(), KpT.reshape(E, 16).ravel(),
                           KtP.reshape(E, 16).ravel(), KtT.reshape(E, 16).ravel()])
    all_rows = np.concatenate([rows, rows, n + rows, n + rows])
    all_cols = np.concatenate([cols, n + cols, cols, n + cols])
    K = sp.coo_matrix((data, (all_rows, all_cols)), shape=(2 * n, 2 * n))
    return K.tocsr()


def residual_design_derivative(
    problem: FlowProblem, state: State, gamma, adjoint: np.ndarray
) -> np.ndarray:
    """Per-element lambda^T dR/dgamma with tau held frozen.

    ``adjoint`` is the packed adjoint vector (zero at Dirichlet DOFs). The
    compliance sensitivity is the negative of this.
    """
    mats = problem.mats
    Pe, Te, mob, kk, (mx, my), (ux, uy) = _element_fields(problem, state, gamma)
    tau = element_tau(problem, gamma, np.hypot(ux, uy))
    dmob = mobility_deriv(gamma, mats)
    dk = conductivity_deriv(gamma, mats)
    rc = mats.rho0 * mats.cp
    gx, gy = mats.g

    n = problem.mesh.n_nodes
    lam_p = adjoint[:n][problem.conn]  # (E, 4)
    lam_t = adjoint[n:][problem.conn]

    # du/dgamma, through the mobility only (the centroid forcing m is state data)
    dux = -dmob * mx
    duy = -dmob * my

    out = np.zeros(problem.mesh.n_elems)
    for q in range(len(problem.wg)):
        w = problem.wg[q]
        Nq, dNxq, dNyq = problem.N[q], problem.dNx[q], problem.dNy[q]
        gpx = Pe @ dNxq
        gpy = Pe @ dNyq
        gtx = Te @ dNxq
        gty = Te @ dNyq
        Tq = Te @ Nq
        fx = gpx + mats.rho0 * mats.beta * (Tq - mats.T0) * gx
        fy = gpy + mats.rho0 * mats.beta * (Tq - mats.T0) * gy
        # pressure rows: R_p = mob * G, dR_p/dgamma = dmob * G
        Gp = fx[:, None] * dNxq + fy[:, None] * dNyq
        out += w * dmob * np.einsum("ea,ea->e", lam_p, Gp)

        conv = ux * gtx + uy * gty
        dconv = dux * gtx + duy * gty
        wstar = Nq[None, :] + tau[:, None] * (ux[:, None] * dNxq + uy[:, None] * dNyq)
        dwstar = tau[:, None] * (dux[:, None] * dNxq + duy[:, None] * dNyq)
        # convection: product rule over wstar and conv; diffusion through dk
        out += w * rc * (
            dconv * np.einsum("ea,ea->e", lam_t, wstar)
            + conv * np.einsum("ea,ea->e", lam_t, dwstar)
        )
        out += w * dk * np.einsum("ea,ea->e", lam_t, gtx[:, None] * dNxq + gty[:, None] * dNyq)
        out -= w * problem.q_elem * np.einsum("ea,ea->e", lam_t, dwstar)
    return out


def heat_balance(problem: FlowProblem, state: State, gamma) -> tuple[float, float, float]:
    """(heat_in, heat_out, relative imbalance) at the given state.

    Heat in is the prescribed boundary flux plus the volumetric source; heat
    out is the reaction extracted from the unreduced residual at the
    temperature Dirichlet rows.
    """
    n = problem.mesh.n_nodes
    R = residual_vector(problem, state, gamma)
    heat_in = problem.load_t.sum() + (problem.q_elem * problem.mesh.elem_volume).sum()
    t_rows = n + problem.dir_t_nodes
    heat_out = -R[t_rows].sum()
    if heat_in == 0.0:
        return 0.0, heat_out, 0.0 if heat_out == 0.0 else np.inf
    return heat_in, heat_out, abs(heat_in - heat_out) / abs(heat_in)
