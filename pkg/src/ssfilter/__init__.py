"""Safety-and-stability QP filter toolkit."""

from .baselines import BaselineKind, baseline_solve
from .compat import (
    BoundarySample,
    CompatReport,
    check_relaxed_compatibility,
    halfspace_pair_feasible,
    sample_boundary,
    scs_margin,
)
from .filter_core import (
    CriticalRegion,
    FilterSolution,
    classify_region,
    closed_form_solve,
    feasible_point,
    oracle_solve,
    verify_kkt,
)
from .poly import Polynomial, PolyVector, lie_derivative_f, lie_derivative_g
from .problem import (
    CertificateProblem,
    ClassKSpec,
    ControlAffineSystem,
    FilterTerms,
    NominalController,
    benchmark_problem,
    load_problem,
    polynomial_case_problem,
)
from .closed_loop import (
    EquilibriumReport,
    Trajectory,
    find_boundary_equilibria,
    monitors,
    roa_certificate,
    scan_interior_equilibria,
    simulate,
)

__all__ = [
    "BaselineKind",
    "BoundarySample",
    "CertificateProblem",
    "ClassKSpec",
    "CompatReport",
    "ControlAffineSystem",
    "CriticalRegion",
    "EquilibriumReport",
    "FilterSolution",
    "FilterTerms",
    "NominalController",
    "Polynomial",
    "PolyVector",
    "Trajectory",
    "baseline_solve",
    "benchmark_problem",
    "check_relaxed_compatibility",
    "classify_region",
    "closed_form_solve",
    "feasible_point",
    "find_boundary_equilibria",
    "halfspace_pair_feasible",
    "lie_derivative_f",
    "lie_derivative_g",
    "load_problem",
    "monitors",
    "oracle_solve",
    "polynomial_case_problem",
    "roa_certificate",
    "sample_boundary",
    "scan_interior_equilibria",
    "scs_margin",
    "simulate",
    "verify_kkt",
]

__version__ = "0.1.0"
