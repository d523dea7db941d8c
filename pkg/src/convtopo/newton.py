"""Damped Newton iteration for the coupled nonlinear system.

The update is s <- s - lambda * K^{-1} R with a sparse direct factorization
and the damping coefficient chosen each iteration from a three-point
quadratic fit of the residual norm along the step. Convergence is accepted
at ||R|| / ||R_0|| <= rel_tol measured over the free DOFs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergedError, SetupError, SolverError
from .physics import FlowProblem, State, residual_vector, tangent_matrix


@dataclass(frozen=True)
class RampSchedule:
    """Multiplicative load stages applied to q_h or beta, ending at 1."""

    parameter: str  # "q_h" or "beta"
    stages: tuple[float, ...]

    def __post_init__(self):
        if self.parameter not in ("q_h", "beta"):
            raise SetupError(f"ramp parameter must be 'q_h' or 'beta', got {self.parameter!r}")
        if not self.stages or abs(self.stages[-1] - 1.0) > 1e-14:
            raise SetupError("ramp stages must end at 1.0")


@dataclass(frozen=True)
class NewtonConfig:
    rel_tol: float = 1e-4
    max_iter: int = 50
    damping: str = "poly"  # "poly" or "fixed"
    fixed_lambda: float = 1.0
    trial_lambdas: tuple[float, float, float] = (0.1, 0.55, 1.0)
    ramp: RampSchedule | None = None

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1.0):
            raise SetupError("rel_tol must lie in (0, 1)")
        if self.damping not in ("poly", "fixed"):
            raise SetupError(f"unknown damping mode {self.damping!r}")
        if self.damping == "fixed" and not (0.0 < self.fixed_lambda <= 1.0):
            raise SetupError("fixed damping coefficient must lie in (0, 1]")


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    damping_history: list = field(default_factory=list)
    ramp_stages: list = field(default_factory=list)
    wall_time: float = 0.0
    dof_count: int = 0


def factorize(K_reduced: sp.spmatrix):
    """Sparse LU of the reduced tangent.

    Rows with no nonzero entries (DOFs fully decoupled, e.g. pressure in a
    region of zero mobility) get an identity diagonal so the factorization
    stays regular; their right-hand side is zero by construction.
    """
    K = K_reduced.tocsr()
    rowsum = np.asarray(np.abs(K).sum(axis=1)).ravel()
    dead = rowsum == 0.0
    if dead.any():
        K = K + sp.diags(dead.astype(float))
    try:
        # structurally symmetric system: AT+A ordering beats COLAMD here
        return spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SolverError(f"tangent factorization failed: {exc}") from exc


def update_damping(trials) -> float:
    """Damping coefficient from sampled residual norms along the step.

    ``trials`` is a sequence of (lambda, ||R||) pairs, at least three. A
    quadratic is fitted exactly through three points; a convex fit returns
    its clamped minimizer, otherwise the best sampled lambda wins.
    """
    lams = np.array([t[0] for t in trials], dtype=float)
    vals = np.array([t[1] for t in trials], dtype=float)
    finite = np.isfinite(vals)
    if not finite.any():
        raise SolverError("all damping trials produced non-finite residuals")
    vals = np.where(finite, vals, np.inf)
    best = float(lams[int(np.argmin(vals))])
    if finite.sum() < 3:
        return best
    # exact quadratic through the first three finite samples
    sel = np.flatnonzero(finite)[:3]
    V = np.vander(lams[sel], 3)  # columns: lam^2, lam, 1
    try:
        a, b, _ = np.linalg.solve(V, vals[sel])
    except np.linalg.LinAlgError:
        return best
    if a <= 0.0 or not np.isfinite(a) or not np.isfinite(b):
        return best
    lam = -b / (2.0 * a)
    if not np.isfinite(lam):
        return best
    return float(min(max(lam, 0.05), 1.0))


def solve_state(
    problem: FlowProblem,
    gamma: np.ndarray,
    cfg: NewtonConfig | None = None,
    initial: State | None = None,
) -> tuple[State, SolveReport]:
    """Newton-iterate the coupled system to the relative residual tolerance.

    Dirichlet values are imposed on the initial state and handled by
    elimination, so they hold exactly in the returned state. Raises
    NonConvergedError (carrying the best state) when max_iter is exhausted.
    """
    cfg = cfg or NewtonConfig()
    t0 = time.perf_counter()
    state = problem.initial_state() if initial is None else problem.apply_dirichlet(initial.copy())
    free = problem.free_idx
    report = SolveReport(dof_count=problem.n_dofs)

    R = residual_vector(problem, state, gamma)
    r0 = float(np.linalg.norm(R[free]))
    report.residual_history.append(r0)
    if r0 == 0.0:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return state, report

    n = problem.mesh.n_nodes
    for it in range(1, cfg.max_iter + 1):
        K = tangent_matrix(problem, state, gamma)
        try:
            lu = factorize(K[free][:, free])
        except SolverError as exc:
            raise SolverError(f"iteration {it}: {exc}") from exc
        ds = np.zeros(problem.n_dofs)
        ds[free] = lu.solve(-R[free])
        if not np.all(np.isfinite(ds)):
            raise SolverError(f"non-finite Newton step at iteration {it}")

        def norm_at(lam):
            trial = State(state.p + lam * ds[:n], state.t + lam * ds[n:])
            Rt = residual_vector(problem, trial, gamma)
            return float(np.linalg.norm(Rt[free])), trial, Rt

        if cfg.damping == "fixed":
            lam = cfg.fixed_lambda
            res, state, R = norm_at(lam)
        else:
            trials = []
            cache = {}
            for tl in cfg.trial_lambdas:
                v, st, Rt = norm_at(tl)
                trials.append((tl, v))
                cache[tl] = (v, st, Rt)
            lam = update_damping(trials)
            if lam in cache:
                res, state, R = cache[lam]
            else:
                res, state, R = norm_at(lam)
        if not np.isfinite(res):
            raise SolverError(f"non-finite residual after update at iteration {it}")
        report.iterations = it
        report.residual_history.append(res)
        report.damping_history.append(lam)
        if res / r0 <= cfg.rel_tol:
            report.converged = True
            report.wall_time = time.perf_counter() - t0
            return state, report

    report.wall_time = time.perf_counter() - t0
    raise NonConvergedError(
        f"Newton did not reach rel_tol={cfg.rel_tol} in {cfg.max_iter} iterations "
        f"(final ratio {report.residual_history[-1] / r0:.3e})",
        state=state,
        report=report,
    )


def ramp_solve(
    problem: FlowProblem,
    gamma: np.ndarray,
    cfg: NewtonConfig,
    initial: State | None = None,
) -> tuple[State, SolveReport]:
    """Solve through a load ramp, warm-starting each stage from the previous."""
    if cfg.ramp is None:
        return solve_state(problem, gamma, cfg, initial)
    t0 = time.perf_counter()
    state = initial
    total = SolveReport(dof_count=problem.n_dofs)
    for k, stage in enumerate(cfg.ramp.stages):
        sub = problem if stage == 1.0 else problem.scaled(cfg.ramp.parameter, stage)
        try:
            state, rep = solve_state(sub, gamma, cfg, state)
        except NonConvergedError as exc:
            raise NonConvergedError(
                f"ramp stage {k} ({cfg.ramp.parameter} x {stage}) failed: {exc}",
                state=exc.state,
                report=exc.report,
            ) from exc
        total.iterations += rep.iterations
        total.residual_history.extend(rep.residual_history)
        total.damping_history.extend(rep.damping_history)
        total.ramp_stages.append(stage)
    total.converged = True
    total.wall_time = time.perf_counter() - t0
    return state, total
