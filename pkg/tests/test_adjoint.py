import numpy as np
import pytest
import scipy.sparse.linalg as spla

from convtopo.adjoint import compliance_sensitivities, solve_adjoint, thermal_compliance
from convtopo.errors import SetupError
from convtopo.mesh import BoundaryConditions, build_structured_mesh, tag_boundary, tag_corner
from convtopo.newton import NewtonConfig, solve_state
from convtopo.optimize import FilterOperator
from convtopo.physics import (
    FlowProblem,
    MaterialSet,
    State,
    element_tau,
    element_velocities,
    residual_vector,
    tangent_matrix,
)
from conftest import make_mini_heatsink


def solve_frozen_tau(problem, gamma, tau, warm, tol=1e-13):
    """Newton solve with the stabilization parameter pinned (FD oracle)."""
    state = warm.copy()
    free = problem.free_idx
    n = problem.mesh.n_nodes
    scale = max(np.linalg.norm(problem.load_t), 1.0)
    for _ in range(40):
        R = residual_vector(problem, state, gamma, frozen_tau=tau)
        if np.linalg.norm(R[free]) < tol * scale:
            break
        K = tangent_matrix(problem, state, gamma, frozen_tau=tau)
        ds = np.zeros(2 * n)
        ds[free] = spla.splu(K[free][:, free].tocsc()).solve(-R[free])
        state.p += ds[:n]
        state.t += ds[n:]
    return state


def fd_gradient(problem, gamma, elements, tau, warm, step=1e-5):
    out = {}
    for e in elements:
        gp = gamma.copy()
        gp[e] += step
        gm = gamma.copy()
        gm[e] -= step
        fp = thermal_compliance(problem, solve_frozen_tau(problem, gp, tau, warm))
        fm = thermal_compliance(problem, solve_frozen_tau(problem, gm, tau, warm))
        out[e] = (fp - fm) / (2.0 * step)
    return out


class TestCompliance:
    def test_zero_temperature(self, mini_heatsink):
        state = State.zeros(mini_heatsink.mesh.n_nodes)
        assert thermal_compliance(mini_heatsink, state) == 0.0

    def test_uniform_temperature_times_heater(self):
        prob = make_mini_heatsink(heater_span=(0.0, 0.3), heater_flux=7.0)
        state = State.zeros(prob.mesh.n_nodes)
        state.t[:] = 2.0
        assert thermal_compliance(prob, state) == pytest.approx(7.0 * 2.0 * 0.3, rel=1e-12)

    def test_no_flux_boundary_is_error(self):
        mesh = build_structured_mesh(4, 4, 1.0, 1.0)
        sets = [
            tag_boundary(mesh, "right", (0.0, 1.0), "dirichlet_T", 0.0),
            tag_corner(mesh, "top-right", "dirichlet_P", 0.0),
        ]
        prob = FlowProblem(mesh, MaterialSet(), BoundaryConditions(mesh, sets))
        with pytest.raises(SetupError):
            thermal_compliance(prob, State.zeros(mesh.n_nodes))


class TestAdjointSolve:
    def test_self_adjoint_conduction(self):
        # velocity-free symmetric problem: adjoint temperature equals the
        # solution of the same conduction system with the compliance load
        prob = make_mini_heatsink(beta=0.0, mobility_fluid=0.0, mobility_solid=0.0)
        gamma = np.full(prob.mesh.n_elems, 0.5)
        state, _ = solve_state(prob, gamma)
        lam = solve_adjoint(prob, state, gamma)
        n = prob.mesh.n_nodes
        # the forward load is the compliance load here, so lambda_t = t
        assert np.allclose(lam[n:], state.t, atol=1e-10)

    def test_zero_load_zero_adjoint(self, mini_heatsink):
        gamma = np.full(mini_heatsink.mesh.n_elems, 0.5)
        state, _ = solve_state(mini_heatsink, gamma)
        lam = solve_adjoint(mini_heatsink, state, gamma,
                            dpsi_ds=np.zeros(2 * mini_heatsink.mesh.n_nodes))
        assert np.all(lam == 0.0)

    def test_adjoint_residual_identity(self):
        prob = make_mini_heatsink(beta=320.0)
        gamma = np.full(prob.mesh.n_elems, 0.35)
        state, _ = solve_state(prob, gamma)
        lam = solve_adjoint(prob, state, gamma)
        free = prob.free_idx
        K = tangent_matrix(prob, state, gamma)
        rhs = np.concatenate([np.zeros(prob.mesh.n_nodes), prob.load_t])
        resid = (K[free][:, free].T @ lam[free]) - rhs[free]
        assert np.linalg.norm(resid) / np.linalg.norm(rhs[free]) < 1e-10


class TestGradient:
    @pytest.mark.parametrize("beta,p_k,p_mob", [
        (640.0, 2.0, 8.0),
        (6400.0, 2.0, 8.0),
        (640.0, 16.0, 20.0),
        (6400.0, 16.0, 20.0),
    ])
    def test_fd_match_physical_field(self, beta, p_k, p_mob, rng):
        prob = make_mini_heatsink(beta=beta, p_k=p_k, p_mobility=p_mob)
        gamma = rng.uniform(0.3, 0.7, prob.mesh.n_elems)
        state, _ = solve_state(prob, gamma, NewtonConfig(rel_tol=1e-12, max_iter=80))
        u = element_velocities(prob, state, gamma)
        tau = element_tau(prob, gamma, np.hypot(u[:, 0], u[:, 1]))
        lam = solve_adjoint(prob, state, gamma)
        dpsi, _ = compliance_sensitivities(prob, state, lam, gamma)
        elems = rng.choice(prob.mesh.n_elems, 10, replace=False)
        fd = fd_gradient(prob, gamma, elems, tau, state)
        for e, val in fd.items():
            assert abs(dpsi[e] - val) / max(abs(val), 1e-12) < 1e-4

    def test_fd_match_cavity_like_configuration(self, rng):
        # left-wall heater, top/bottom cold walls (the second benchmark's
        # layout) at its calibrated mobility
        from convtopo.mesh import BoundaryConditions, build_structured_mesh, tag_boundary, tag_corner
        from convtopo.physics import FlowProblem, MaterialSet

        mesh = build_structured_mesh(10, 10, 1.0, 1.0)
        sets = [
            tag_boundary(mesh, "left", (0.3, 0.7), "flux_T", 1.0, "heater"),
            tag_boundary(mesh, "top", (0.0, 1.0), "dirichlet_T", 0.0),
            tag_boundary(mesh, "bottom", (0.0, 1.0), "dirichlet_T", 0.0),
            tag_corner(mesh, "top-right", "dirichlet_P", 0.0),
        ]
        mats = MaterialSet(beta=5120.0, mobility_fluid=0.15, p_k=2.0, p_mobility=8.0)
        prob = FlowProblem(mesh, mats, BoundaryConditions(mesh, sets))
        gamma = rng.uniform(0.3, 0.7, prob.mesh.n_elems)
        state, _ = solve_state(prob, gamma, NewtonConfig(rel_tol=1e-12, max_iter=80))
        u = element_velocities(prob, state, gamma)
        tau = element_tau(prob, gamma, np.hypot(u[:, 0], u[:, 1]))
        lam = solve_adjoint(prob, state, gamma)
        dpsi, _ = compliance_sensitivities(prob, state, lam, gamma)
        fd = fd_gradient(prob, gamma, rng.choice(prob.mesh.n_elems, 8, replace=False),
                         tau, state)
        for e, val in fd.items():
            assert abs(dpsi[e] - val) / max(abs(val), 1e-12) < 1e-4

    def test_fd_match_through_filter(self, rng):
        # includes the filter chain rule: gamma raw -> filtered -> solve
        prob = make_mini_heatsink(beta=640.0)
        ne = prob.mesh.n_elems
        filt = FilterOperator(prob.mesh.element_centroids(),
                              np.full(ne, prob.mesh.elem_volume), r_min=0.25)
        gamma_raw = rng.uniform(0.3, 0.7, ne)
        gamma_phys = filt.apply(gamma_raw)
        state, _ = solve_state(prob, gamma_phys, NewtonConfig(rel_tol=1e-12, max_iter=80))
        u = element_velocities(prob, state, gamma_phys)
        tau = element_tau(prob, gamma_phys, np.hypot(u[:, 0], u[:, 1]))
        lam = solve_adjoint(prob, state, gamma_phys)
        dpsi, _ = compliance_sensitivities(prob, state, lam, gamma_phys, filter_op=filt)

        step = 1e-5
        for e in rng.choice(ne, 6, replace=False):
            gp = gamma_raw.copy()
            gp[e] += step
            gm = gamma_raw.copy()
            gm[e] -= step
            fp = thermal_compliance(prob, solve_frozen_tau(prob, filt.apply(gp), tau, state))
            fm = thermal_compliance(prob, solve_frozen_tau(prob, filt.apply(gm), tau, state))
            fd = (fp - fm) / (2.0 * step)
            assert abs(dpsi[e] - fd) / max(abs(fd), 1e-12) < 1e-4

    def test_identity_filter_matches_unfiltered(self, rng):
        prob = make_mini_heatsink(beta=640.0)
        ne = prob.mesh.n_elems
        filt = FilterOperator(prob.mesh.element_centroids(),
                              np.full(ne, prob.mesh.elem_volume), r_min=0.05)  # < spacing
        gamma = rng.uniform(0.3, 0.7, ne)
        assert np.allclose(filt.apply(gamma), gamma, atol=1e-14)
        state, _ = solve_state(prob, gamma)
        lam = solve_adjoint(prob, state, gamma)
        d_raw, _ = compliance_sensitivities(prob, state, lam, gamma)
        d_filt, _ = compliance_sensitivities(prob, state, lam, gamma, filter_op=filt)
        assert np.allclose(d_raw, d_filt, atol=1e-14)

    def test_volume_sensitivity_is_element_volume(self, mini_heatsink):
        gamma = np.full(mini_heatsink.mesh.n_elems, 0.5)
        state, _ = solve_state(mini_heatsink, gamma)
        lam = solve_adjoint(mini_heatsink, state, gamma)
        _, dvol = compliance_sensitivities(mini_heatsink, state, lam, gamma)
        assert np.all(dvol == mini_heatsink.mesh.elem_volume)


class TestGaugeInvariance:
    def test_pressure_offset_leaves_outputs_unchanged(self):
        cfg = NewtonConfig(rel_tol=1e-13, max_iter=80)
        gamma = None
        outs = []
        for pin in (0.0, 5.0):
            prob = make_mini_heatsink(beta=320.0, pressure_pin=pin)
            if gamma is None:
                gamma = np.full(prob.mesh.n_elems, 0.4)
            state, _ = solve_state(prob, gamma, cfg)
            u = element_velocities(prob, state, gamma)
            outs.append((state, u, thermal_compliance(prob, state)))
        (s0, u0, psi0), (s5, u5, psi5) = outs
        shift = s5.p - s0.p
        assert np.max(np.abs(shift - 5.0)) < 1e-9
        assert np.max(np.abs(u5 - u0)) < 1e-10 * max(1.0, np.abs(u0).max())
        assert abs(psi5 - psi0) < 1e-10 * max(1.0, abs(psi0))
