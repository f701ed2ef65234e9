"""Quasilocal energy of compact 2D metrics relative to a flat
background, computed by solving a constrained Dirac boundary value
problem and cross-checked against exact closed forms."""

from .errors import (SpinqlError, ValidationError,
                     UnsupportedDimensionError, AssemblyError,
                     SolverConvergenceError, OutOfHypothesisError)
from .clifford import (build_clifford_rep, build_twisted_rep,
                       boundary_involution, chirality_projectors,
                       gamma_product, form_endomorphism, form_coefficients)
from .geometry import (FlatDisk, ConformalFlat, RotSym, General2D,
                       PolyBumpProfile, SampledRadialProfile, SinProfile,
                       LinearProfile, traceless_bump_metric, identity_metric,
                       build_domain, boundary_geometry, scalar_curvature,
                       lambda2_distortion)
from .dirac import (SpinorField, DiscreteOperator,
                    assemble_covariant_derivative, assemble_dirac,
                    assemble_boundary_rows, boundary_projector_basis,
                    assemble_tangential_dirac, integrate_volume,
                    integrate_boundary, normal_derivative_at_boundary,
                    green_residual, lichnerowicz_residual)
from .solver import (NEG_INF, DiracSystem, BoundaryData, KernelInfo,
                     EnergyReport, build_system, kernel_basis,
                     boundary_ones, project_boundary_data, solve_bvp,
                     energy_bulk, energy_normal_derivative, energy_boundary,
                     BulkEnergyForm, minimize_energy, quasilocal_energy)
from .closed_form import (ClosedFormResult, brown_york, conformal_energy,
                          rotsym_energy, rotsym_to_conformal)

__version__ = "0.1.0"
