"""Sum-of-squares synthesis of compatible barrier/Lyapunov pairs."""

from .cases import case_from_json, polynomial_2d_case, scaled_spec
from .design import DesignArtifact, bootstrap_lyapunov, run_algorithm, verify_artifact
from .export import build_artifact_json, write_artifact
from .poly import Poly, norm_sq
from .programs import (
    DesignSpec,
    build_full_program,
    solve_iteration_A,
    solve_iteration_B,
    verify_compatibility,
)
from .sos import check_sos_numeric

__all__ = [
    "DesignArtifact",
    "DesignSpec",
    "Poly",
    "bootstrap_lyapunov",
    "build_artifact_json",
    "build_full_program",
    "case_from_json",
    "check_sos_numeric",
    "norm_sq",
    "polynomial_2d_case",
    "run_algorithm",
    "scaled_spec",
    "solve_iteration_A",
    "solve_iteration_B",
    "verify_artifact",
    "verify_compatibility",
    "write_artifact",
]
