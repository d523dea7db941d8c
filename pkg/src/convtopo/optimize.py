"""Density filtering and the outer optimization loop.

The loop is the classic nested scheme: filter the raw design, solve the
coupled state, evaluate the compliance, solve the adjoint, pull the
gradient back through the filter and take one MMA step, with penalization
continuation advancing every ``switch_every`` iterations or when the
maximum design change drops below the change tolerance. On the final
continuation stage the change tolerance is the stopping criterion.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .adjoint import compliance_sensitivities, solve_adjoint, thermal_compliance
from .errors import NonConvergedError, SetupError
from .mma import Mma
from .newton import NewtonConfig, RampSchedule, SolveReport, ramp_solve, solve_state
from .physics import FlowProblem, State


class FilterOperator:
    """Conic (linear hat) density filter over element centroids.

    Weights are renormalized row-wise, so boundary elements average only
    over their in-domain neighborhood; a radius below the centroid spacing
    degenerates to the identity.
    """

    def __init__(self, centroids: np.ndarray, volumes: np.ndarray, r_min: float):
        if r_min < 0.0:
            raise SetupError("filter radius must be >= 0")
        self.r_min = float(r_min)
        n = centroids.shape[0]
        if r_min == 0.0:
            self.matrix = sp.identity(n, format="csr")
            return
        tree = cKDTree(centroids)
        pairs = tree.query_ball_point(centroids, r_min)
        rows, cols, vals = [], [], []
        for i, neigh in enumerate(pairs):
            neigh = np.asarray(neigh, dtype=int)
            d = np.linalg.norm(centroids[neigh] - centroids[i], axis=1)
            w = (r_min - d) * volumes[neigh]
            keep = w > 0.0
            if not keep.any():  # radius smaller than any spacing: keep self
                neigh, w = np.array([i]), np.array([1.0])
            else:
                neigh, w = neigh[keep], w[keep]
            w = w / w.sum()
            rows.extend([i] * len(neigh))
            cols.extend(neigh.tolist())
            vals.extend(w.tolist())
        self.matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def apply(self, gamma: np.ndarray) -> np.ndarray:
        return np.clip(self.matrix @ gamma, 0.0, 1.0)

    def chain(self, sens_phys: np.ndarray) -> np.ndarray:
        """Pull a physical-field gradient back to the raw variables."""
        return self.matrix.T @ sens_phys


@dataclass
class DesignField:
    """Raw and filtered design over the design subdomain."""

    gamma: np.ndarray
    gamma_phys: np.ndarray
    r_min: float

    def __post_init__(self):
        for arr in (self.gamma, self.gamma_phys):
            if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
                raise SetupError("design fields must lie in [0, 1]")


@dataclass(frozen=True)
class OptimizationSchedule:
    p_k_seq: tuple[float, ...] = (2.0, 8.0, 16.0, 16.0)
    p_mobility_seq: tuple[float, ...] = (8.0, 8.0, 8.0, 20.0)
    switch_every: int = 50
    change_tol: float = 0.01
    move_limit: float = 0.2
    v_star: float = 0.5
    max_outer_iter: int = 500

    def __post_init__(self):
        if len(self.p_k_seq) != len(self.p_mobility_seq):
            raise SetupError("continuation sequences must have equal length")
        if not (0.0 < self.move_limit <= 1.0):
            raise SetupError("move limit must lie in (0, 1]")

    @property
    def n_stages(self) -> int:
        return len(self.p_k_seq)


@dataclass
class CaseSetup:
    """Everything one optimization run needs."""

    name: str
    problem: FlowProblem
    design_elements: np.ndarray  # element ids of the design subdomain
    background_gamma: np.ndarray  # full-mesh phase field outside the design
    schedule: OptimizationSchedule
    newton: NewtonConfig
    r_min: float
    gamma0: float = 0.5
    report_scale: float = 1.0  # half-domain / thickness factor applied for reporting
    retry_ramp: RampSchedule = RampSchedule("beta", (0.25, 0.5, 1.0))

    def full_gamma(self, gamma_phys_design: np.ndarray) -> np.ndarray:
        full = self.background_gamma.copy()
        full[self.design_elements] = gamma_phys_design
        return full

    def filter_operator(self, r_min: float | None = None) -> FilterOperator:
        cents = self.problem.mesh.element_centroids()[self.design_elements]
        vols = np.full(len(self.design_elements), self.problem.mesh.elem_volume)
        return FilterOperator(cents, vols, self.r_min if r_min is None else r_min)


@dataclass
class OptimizationResult:
    design: DesignField
    history: list
    final_state: State
    final_problem: FlowProblem
    solve_reports: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.history[-1]["psi"] if self.history else float("nan")


def _solve_with_retry(problem, gamma_full, cfg, warm, retry_ramp):
    """Forward solve with one automatic ramped retry from a cold start."""
    try:
        return solve_state(problem, gamma_full, cfg, warm)
    except NonConvergedError:
        ramp_cfg = replace(cfg, ramp=retry_ramp)
        return ramp_solve(problem, gamma_full, ramp_cfg, None)


def run_optimization(setup: CaseSetup) -> OptimizationResult:
    """Run the full continuation-and-MMA loop for one case."""
    sched = setup.schedule
    n_d = len(setup.design_elements)
    gamma = np.full(n_d, setup.gamma0, dtype=float)
    filt = setup.filter_operator()
    mma = Mma(n_d)
    vol = setup.problem.mesh.elem_volume
    v_total = vol * n_d
    dg_dgamma = np.full(n_d, vol / v_total)

    stage = 0
    iters_in_stage = 0
    history: list[dict] = []
    reports: list[SolveReport] = []
    state = None
    problem = _staged_problem(setup.problem, sched, stage)

    gamma_phys = filt.apply(gamma)
    if sched.max_outer_iter == 0:
        full = setup.full_gamma(gamma_phys)
        state, rep = _solve_with_retry(problem, full, setup.newton, None, setup.retry_ramp)
        reports.append(rep)
        psi = thermal_compliance(problem, state)
        history.append(_record(0, psi, _volume(gamma, vol, v_total, sched.v_star), 0.0, stage))
        return OptimizationResult(DesignField(gamma, gamma_phys, setup.r_min), history,
                                  state, problem, reports)

    for it in range(1, sched.max_outer_iter + 1):
        gamma_phys = filt.apply(gamma)
        full = setup.full_gamma(gamma_phys)
        state, rep = _solve_with_retry(problem, full, setup.newton, state, setup.retry_ramp)
        reports.append(rep)
        psi = thermal_compliance(problem, state)
        lam = solve_adjoint(problem, state, full)
        dpsi, _ = compliance_sensitivities(problem, state, lam, full, filt,
                                           setup.design_elements)
        gval = _volume(gamma, vol, v_total, sched.v_star)
        gamma_new = mma.update(gamma, dpsi, gval, dg_dgamma, sched.move_limit)
        max_change = float(np.max(np.abs(gamma_new - gamma)))
        gamma = gamma_new
        history.append(_record(it, psi, gval, max_change, stage))

        iters_in_stage += 1
        changed_out = max_change < sched.change_tol
        if stage == sched.n_stages - 1:
            if changed_out:
                break
        elif changed_out or iters_in_stage >= sched.switch_every:
            stage += 1
            iters_in_stage = 0
            problem = _staged_problem(setup.problem, sched, stage)

    # final analysis at the last accepted design
    gamma_phys = filt.apply(gamma)
    full = setup.full_gamma(gamma_phys)
    state, rep = _solve_with_retry(problem, full, setup.newton, state, setup.retry_ramp)
    reports.append(rep)
    psi = thermal_compliance(problem, state)
    history.append(_record(len(history) + 1, psi,
                           _volume(gamma, vol, v_total, sched.v_star), 0.0, stage))
    return OptimizationResult(DesignField(gamma, gamma_phys, setup.r_min), history,
                              state, problem, reports)


def _volume(gamma, vol, v_total, v_star) -> float:
    return float(gamma.sum() * vol / v_total - v_star)


def _record(it, psi, gval, max_change, stage) -> dict:
    return {"iter": it, "psi": psi, "constraint": gval, "max_change": max_change,
            "stage": stage}


def _staged_problem(problem: FlowProblem, sched: OptimizationSchedule, stage: int) -> FlowProblem:
    mats = replace(problem.mats, p_k=sched.p_k_seq[stage],
                   p_mobility=sched.p_mobility_seq[stage])
    return FlowProblem(problem.mesh, mats, problem.bcs, problem.q_elem,
                       problem.tau_diffusivity)


@dataclass
class CrossCheck:
    gr_values: tuple
    psi: np.ndarray  # (n_designs, n_conditions)
    psi_scaled: np.ndarray
    dT_max: np.ndarray
    heat_imbalance: np.ndarray  # relative |in - out| / in per evaluation

    def dominance_holds(self) -> bool:
        """Each design must be the column minimum at its own condition."""
        return all(int(np.argmin(self.psi[:, j])) == j for j in range(self.psi.shape[1]))


def cross_check(case_builder, gr_values, designs, setups) -> CrossCheck:
    """Evaluate every design at every operating condition.

    ``case_builder(gr)`` must return a CaseSetup on the common mesh with the
    final evaluation exponents already set. ``designs``/``setups`` are the
    per-Gr optimization outputs in ``gr_values`` order.
    """
    from .physics import heat_balance

    nd = len(designs)
    nc = len(gr_values)
    psi = np.zeros((nd, nc))
    dT = np.zeros((nd, nc))
    bal = np.zeros((nd, nc))
    scale = 1.0
    for j, gr in enumerate(gr_values):
        eval_setup = case_builder(gr)
        scale = eval_setup.report_scale
        for i, (design, src) in enumerate(zip(designs, setups)):
            full = src.full_gamma(design.gamma_phys)
            state, _ = _solve_with_retry(eval_setup.problem, full, eval_setup.newton,
                                         None, eval_setup.retry_ramp)
            psi[i, j] = thermal_compliance(eval_setup.problem, state)
            dT[i, j] = float(state.t.max() - eval_setup.problem.mats.T0)
            bal[i, j] = heat_balance(eval_setup.problem, state, full)[2]
    return CrossCheck(tuple(gr_values), psi, psi * scale, dT, bal)
