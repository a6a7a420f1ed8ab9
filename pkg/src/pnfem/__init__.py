"""Mixed even/odd-parity PN finite element solver for time-dependent radiative transfer."""

from .angular import AngularBasis, ModeIndex, collision_spectrum, halfrange_matrix, sh_eval, sphere_quadrature, streaming_matrices
from .benchmark import ErrorReport, ManufacturedSolution, compute_eoc, compute_errors, manufactured_source, run_study
from .errors import ConfigurationError, ContractViolation, InputDomainError, MeshError, PnFemError, SolverError
from .mesh import TriMesh, assemble_spatial, dof_count, read_mesh, unit_square_mesh
from .operators import ParityField, TransportSystem, apply_B, apply_H, apply_mass, apply_S, build_isotropic_system, build_system
from .simulation import EnergyTrace, TransientConfig, elliptic_projection, run_transient
from .solvers import SolverConfig, dense_oracle_solve, solve_stationary, solve_step

__version__ = "0.1.0"

__all__ = [
    "AngularBasis",
    "apply_B",
    "apply_H",
    "apply_mass",
    "apply_S",
    "assemble_spatial",
    "build_isotropic_system",
    "build_system",
    "collision_spectrum",
    "compute_eoc",
    "compute_errors",
    "ConfigurationError",
    "ContractViolation",
    "dense_oracle_solve",
    "dof_count",
    "elliptic_projection",
    "EnergyTrace",
    "ErrorReport",
    "halfrange_matrix",
    "InputDomainError",
    "manufactured_source",
    "ManufacturedSolution",
    "MeshError",
    "ModeIndex",
    "ParityField",
    "PnFemError",
    "read_mesh",
    "run_study",
    "run_transient",
    "sh_eval",
    "solve_stationary",
    "solve_step",
    "SolverConfig",
    "SolverError",
    "sphere_quadrature",
    "streaming_matrices",
    "TransientConfig",
    "TransportSystem",
    "TriMesh",
    "unit_square_mesh",
]
