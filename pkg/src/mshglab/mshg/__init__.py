"""Vacuum modified sinh-Gordon field, its flat connection and massive Wilson loops."""

from .background import Background, check_m
from .connection import FlatConnection, build_connection, connection_matrices, flatness_residual, sample_points
from .field import MShGField
from .mesh import CompositeMesh, MeshSpec, build_mesh
from .profile import (
    CandidateField,
    ExpansionReport,
    ExponentFit,
    ProfileReport,
    PunctureExpansion,
    ResolutionWarning,
    boundary_profile_check,
    validate_puncture_expansion,
)
from .solver import (
    RefinementStudy,
    refinement_study,
    residual_norm,
    rho_sweep,
    solve_patch,
    solve_vacuum,
    transfer_residual,
)
from .wilson import PDE_TOL, default_pde_loop, pde_scan, pde_transport, pde_wilson

__all__ = [
    "Background",
    "CandidateField",
    "CompositeMesh",
    "ExpansionReport",
    "ExponentFit",
    "FlatConnection",
    "MShGField",
    "MeshSpec",
    "PDE_TOL",
    "ProfileReport",
    "PunctureExpansion",
    "RefinementStudy",
    "ResolutionWarning",
    "boundary_profile_check",
    "build_connection",
    "build_mesh",
    "check_m",
    "connection_matrices",
    "default_pde_loop",
    "flatness_residual",
    "pde_scan",
    "pde_transport",
    "pde_wilson",
    "refinement_study",
    "residual_norm",
    "rho_sweep",
    "sample_points",
    "solve_patch",
    "solve_vacuum",
    "transfer_residual",
    "validate_puncture_expansion",
]
