"""Spectral-Galerkin simulator and verification harness for the primitive
equations with horizontal viscosity on a box (-h, h) x G."""

from .basis import DomainSpec, SpectralBasis, build_basis, hydrostatic_project, poincare_constants
from .diagnostics import (
    DiagnosticsConfig,
    DiagnosticsRecord,
    GronwallSpec,
    apriori_functionals,
    barotropic_l4_functionals,
    energy_identity_residual,
    gronwall_envelope,
    lq_preservation_check,
    pressure_gradient,
    sqrt_q_growth,
    trilinear_check,
)
from .dynamics import (
    BlowUpError,
    ForcingSpec,
    IntegratorConfig,
    SimulationState,
    nonlinear_term,
    rhs,
    simulate,
    step,
)
from .field import (
    NotProjectedError,
    ScalarField,
    VelocityField,
    inner,
    norm,
    read_checkpoint,
    reconstruct_w,
    write_checkpoint,
)
from .periodic import (
    PeriodicSolveConfig,
    PeriodicSolveReport,
    contraction_estimate,
    fixed_point_solve,
    poincare_map,
)

__all__ = [
    "DomainSpec", "SpectralBasis", "build_basis", "hydrostatic_project", "poincare_constants",
    "DiagnosticsConfig", "DiagnosticsRecord", "GronwallSpec", "apriori_functionals",
    "barotropic_l4_functionals", "energy_identity_residual", "gronwall_envelope",
    "lq_preservation_check", "pressure_gradient", "sqrt_q_growth", "trilinear_check",
    "BlowUpError", "ForcingSpec", "IntegratorConfig", "SimulationState", "nonlinear_term",
    "rhs", "simulate", "step", "NotProjectedError", "ScalarField", "VelocityField", "inner",
    "norm", "read_checkpoint", "reconstruct_w", "write_checkpoint", "PeriodicSolveConfig",
    "PeriodicSolveReport", "contraction_estimate", "fixed_point_solve", "poincare_map",
]
