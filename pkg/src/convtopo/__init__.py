"""Topology optimization of natural-convection heat sinks.

A potential-flow reduced-order model couples a pressure Poisson equation to
SUPG-stabilized heat transport; velocities follow explicitly from pressure
and temperature, halving the DOF count of a full flow model. The package
provides the coupled solver, adjoint sensitivities, density-filtered MMA
optimization with penalization continuation, a surface-convection
comparison model and a mobility-calibration harness.
"""

from .adjoint import compliance_sensitivities, solve_adjoint, thermal_compliance
from .calibrate import ReferenceField, SweepResult, field_mse, load_reference, save_reference, sweep_mobility
from .errors import AssemblyError, NonConvergedError, SetupError, SolverError
from .mesh import (
    BoundaryConditions,
    BoundarySet,
    Mesh,
    QuadRule,
    build_structured_mesh,
    gauss_2x2,
    shape_eval,
    tag_boundary,
    tag_corner,
)
from .mma import Mma
from .newton import NewtonConfig, RampSchedule, SolveReport, ramp_solve, solve_state, update_damping
from .optimize import (
    CaseSetup,
    CrossCheck,
    DesignField,
    FilterOperator,
    OptimizationResult,
    OptimizationSchedule,
    cross_check,
    run_optimization,
)
from .physics import (
    DimensionlessGroups,
    FlowProblem,
    MaterialSet,
    State,
    conductivity,
    dimensionless_groups,
    element_velocities,
    heat_balance,
    mobility,
    residual_vector,
    stabilization_tau,
    tangent_matrix,
)
from .simplified import (
    FilterContinuation,
    SimplifiedCase,
    SimplifiedMaterial,
    SimplifiedProblem,
    assemble_simplified,
    average_convection_coefficient,
    run_simplified_optimization,
    simplified_sensitivities,
    solve_simplified,
)

__version__ = "0.1.0"
