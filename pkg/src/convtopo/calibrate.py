"""Mobility calibration against an ingested reference temperature field.

The fluid mobility of the reduced-order model is a tuning constant: it is
chosen by sweeping forward solves over a mobility grid and minimizing the
mean squared difference of the nodal temperatures against a reference
solution computed on the same grid (externally produced reference fields
are ingested from JSON; meshes must match node for node).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import NonConvergedError, SetupError
from .newton import NewtonConfig, solve_state
from .physics import FlowProblem

TIE_TOL = 1e-12  # error spread below which the minimum is reported non-unique


@dataclass(frozen=True)
class ReferenceField:
    """Nodal reference temperatures plus the mesh they were computed on."""

    nx: int
    ny: int
    width: float
    height: float
    temperatures: np.ndarray
    label: str = ""
    gr: float = float("nan")
    geometry: str = ""

    def __post_init__(self):
        n = (self.nx + 1) * (self.ny + 1)
        if self.temperatures.shape != (n,):
            raise SetupError(
                f"reference has {self.temperatures.shape[0]} temperatures, mesh needs {n}"
            )
        if not np.all(np.isfinite(self.temperatures)):
            raise SetupError("reference temperatures must be finite")

    def check_mesh(self, mesh):
        if (self.nx, self.ny) != (mesh.nx, mesh.ny) or (
            abs(self.width - mesh.width) > 1e-12 or abs(self.height - mesh.height) > 1e-12
        ):
            raise SetupError(
                f"reference grid {self.nx}x{self.ny} ({self.width}x{self.height}) does not "
                f"match solver mesh {mesh.nx}x{mesh.ny} ({mesh.width}x{mesh.height})"
            )


def save_reference(path, ref: ReferenceField):
    payload = {
        "label": ref.label, "gr": ref.gr, "geometry": ref.geometry,
        "nx": ref.nx, "ny": ref.ny, "width": ref.width, "height": ref.height,
        "temperatures": ref.temperatures.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_reference(path) -> ReferenceField:
    with open(path) as fh:
        payload = json.load(fh)
    return ReferenceField(
        nx=int(payload["nx"]), ny=int(payload["ny"]),
        width=float(payload["width"]), height=float(payload["height"]),
        temperatures=np.asarray(payload["temperatures"], float),
        label=payload.get("label", ""), gr=float(payload.get("gr", float("nan"))),
        geometry=payload.get("geometry", ""),
    )


def field_mse(t_a: np.ndarray, t_b: np.ndarray) -> float:
    """Mean squared nodal difference, (1/N) sum (a - b)^2."""
    a = np.asarray(t_a, float)
    b = np.asarray(t_b, float)
    if a.shape != b.shape:
        raise SetupError(f"field length mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d) / a.shape[0]


@dataclass
class SweepResult:
    values: np.ndarray  # swept fluid mobilities
    errors: np.ndarray  # MSE per grid point (nan where the solve failed)
    converged: np.ndarray  # bool per grid point
    best_value: float
    best_error: float
    at_boundary: bool
    unique: bool


def mobility_grid(lo: float, hi: float, step: float) -> np.ndarray:
    if not (lo < hi) or step <= 0.0:
        raise SetupError("need lo < hi and step > 0")
    count = int(np.floor((hi - lo) / step + 0.5)) + 1
    return np.round(lo + step * np.arange(count), 12)


def sweep_mobility(
    problem: FlowProblem,
    gamma: np.ndarray,
    reference: ReferenceField,
    lo: float,
    hi: float,
    step: float,
    newton: NewtonConfig | None = None,
) -> SweepResult:
    """Forward-solve over a mobility grid and report the best fit.

    Every grid point starts from the same cold state so a point reproduces
    the reference generator bit-for-bit when the physics match. Failed
    solves are flagged and skipped in the argmin, never silently dropped.
    """
    reference.check_mesh(problem.mesh)
    newton = newton or NewtonConfig()
    grid = mobility_grid(lo, hi, step)
    errors = np.full(grid.shape, np.nan)
    converged = np.zeros(grid.shape, dtype=bool)
    for i, mob in enumerate(grid):
        mats = replace(problem.mats, mobility_fluid=float(mob))
        sub = FlowProblem(problem.mesh, mats, problem.bcs, problem.q_elem,
                          problem.tau_diffusivity)
        try:
            state, _ = solve_state(sub, gamma, newton)
        except NonConvergedError:
            continue
        converged[i] = True
        errors[i] = field_mse(state.t, reference.temperatures)

    if not converged.any():
        raise SetupError("no sweep point converged")
    ok = np.flatnonzero(converged)
    best = ok[int(np.argmin(errors[ok]))]
    spread = float(np.nanmax(errors[ok]) - np.nanmin(errors[ok]))
    return SweepResult(
        values=grid,
        errors=errors,
        converged=converged,
        best_value=float(grid[best]),
        best_error=float(errors[best]),
        at_boundary=best in (ok[0], ok[-1]),
        unique=spread > TIE_TOL,
    )
