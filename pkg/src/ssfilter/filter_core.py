"""Safety-and-stability filter QP at a state.

Three routes to the same optimum:
  * `oracle_solve`   - exact active-set enumeration (ground truth),
  * `closed_form_solve` - critical-region classification + branch formulas,
    falling back to the oracle on seams or failed KKT checks,
  * `verify_kkt`     - independent residual check for either route.

The both-active multiplier system is assembled from stationarity and the
active constraints rather than transcribed; see the sign note at
`_both_active_multipliers`.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import NamedTuple, Sequence

from .problem import FilterTerms, grad_tol
from .poly import dot
from . import smallqp

TOL_REGION = 1e-9
TOL_KKT = 1e-8
TOL_FEAS = 1e-9
PARALLEL_TOL = 1e-12


class RelaxedCompatibilityError(RuntimeError):
    """Raised when the constructive feasibility argument fails on the boundary."""


class CriticalRegion(Enum):
    """Active-set patterns of the parametric QP, in fixed classification order."""

    NO_ACTIVE = 1               # both constraints slack at the nominal input
    CBF_ACTIVE = 2              # barrier row active, regular
    CBF_VACUOUS = 3             # barrier row active but empty (Lgb=0 on boundary)
    CLF_ACTIVE = 4              # Lyapunov row active, regular
    CLF_FLAT = 5                # Lyapunov row active with vanishing gradient
    BOTH_ACTIVE = 6             # both rows active, invertible multiplier system
    BOTH_CBF_VACUOUS = 7        # both active, barrier row empty
    BOTH_PARALLEL = 8           # both active, dependent rows on the boundary
    CBF_ACTIVE_CLF_FLAT = 9     # barrier active, Lyapunov gradient vanishes
    FULLY_DEGENERATE = 10       # every quantity vanishes
    UNCLASSIFIED = 0

    @property
    def index(self) -> int:
        return self.value


# Regions where the nominal input is returned unchanged.
_PASSTHROUGH = {
    CriticalRegion.NO_ACTIVE,
    CriticalRegion.CBF_VACUOUS,
    CriticalRegion.CLF_FLAT,
    CriticalRegion.FULLY_DEGENERATE,
}


class FilterSolution(NamedTuple):
    u_star: tuple
    s_star: float
    lambda1: float | None       # None marks an indeterminate multiplier
    lambda2: float | None
    region: CriticalRegion
    path: str                   # "closed-form" or "oracle"
    kkt_residual: float
    objective: float
    feasible: bool = True

    def to_json(self) -> dict:
        return {
            "u": list(self.u_star),
            "s": self.s_star,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "region": self.region.name,
            "region_index": self.region.index,
            "path": self.path,
            "kkt_residual": self.kkt_residual,
            "objective": self.objective,
            "feasible": self.feasible,
        }


def _tol(q: float) -> float:
    return TOL_REGION * (1.0 + abs(q))


def _pos(q: float) -> bool:
    return q > _tol(q)


def _neg(q: float) -> bool:
    return q < -_tol(q)


def _zero(q: float) -> bool:
    return abs(q) <= _tol(q)


def _vec_zero(v: Sequence[float], x: Sequence[float]) -> bool:
    return math.sqrt(dot(v, v)) <= grad_tol(x)


def _parallel(a: Sequence[float], b: Sequence[float]) -> bool:
    ab = dot(a, b)
    return ab * ab >= (1.0 - PARALLEL_TOL) * dot(a, a) * dot(b, b)


def constraint_values(terms: FilterTerms, u: Sequence[float], s: float) -> tuple[float, float]:
    """(F1, F2) of the filter at a candidate point: F1 >= 0, F2 <= 0 required."""
    f1 = terms.Lfb + dot(terms.Lgb, u) + s * terms.alpha_b
    f2 = terms.LfV + dot(terms.LgV, u) + terms.beta_b * terms.gamma_val
    return f1, f2


def filter_objective(terms: FilterTerms, u: Sequence[float], s: float) -> float:
    du = [ui - pi for ui, pi in zip(u, terms.pi_x)]
    return 0.5 * dot(du, du) + 0.5 * terms.p * (s - 1.0) ** 2


def _both_active_multipliers(terms: FilterTerms) -> tuple[float, float] | None:
    """Multipliers when both constraints are active and the system is regular.

    Substituting u = pi + l1 Lgb' - l2 LgV' and s = 1 + l1 a/p into the two
    active constraints gives
        [ F'_b   -Lgb.LgV' ] [l1]   [ -F_b ]
        [ Lgb.LgV'  -|LgV|^2 ] [l2] = [ -F_V ]
    (note the second right-hand entry: -F_V, required for consistency with
    the single-active limits).
    """
    B1 = dot(terms.Lgb, terms.LgV)
    G2 = dot(terms.LgV, terms.LgV)
    det = -terms.F_b_prime * G2 + B1 * B1
    scale = terms.F_b_prime * G2 + B1 * B1
    if abs(det) <= 1e-14 * (1.0 + scale):
        return None
    l1 = (G2 * terms.F_b - B1 * terms.F_V) / det
    l2 = (B1 * terms.F_b - terms.F_b_prime * terms.F_V) / det
    return l1, l2


def classify_region(terms: FilterTerms) -> CriticalRegion:
    """First-match classification over the ten membership predicates.

    Equality predicates use the scale-aware TOL_REGION band and strict
    inequalities require clearance beyond it, so measure-zero seams (which
    route to the oracle) are classified UNCLASSIFIED.
    """
    x = terms.x
    F_b, F_V, Fpb = terms.F_b, terms.F_V, terms.F_b_prime
    Lgb, LgV = terms.Lgb, terms.LgV
    B1 = dot(Lgb, LgV)
    G2 = dot(LgV, LgV)
    lgv_zero = _vec_zero(LgV, x)
    lgb_zero = _vec_zero(Lgb, x)

    # 1: both slack at the nominal input
    if _pos(F_b) and _neg(F_V):
        return CriticalRegion.NO_ACTIVE
    # 2: barrier active, regular
    if _neg(F_V * Fpb - F_b * B1) and F_b <= _tol(F_b) and _pos(Fpb):
        return CriticalRegion.CBF_ACTIVE
    # 3: barrier row vacuous on the boundary
    if _neg(F_V) and _zero(terms.b_val) and lgb_zero:
        return CriticalRegion.CBF_VACUOUS
    # 4: Lyapunov active, regular
    if _pos(F_b * G2 - F_V * B1) and F_V >= -_tol(F_V) and not lgv_zero:
        return CriticalRegion.CLF_ACTIVE
    # 5: Lyapunov active with vanishing gradient
    if _pos(F_b) and lgv_zero:
        return CriticalRegion.CLF_FLAT
    # 6: both active, invertible system -> membership is dual feasibility
    if not lgv_zero and not _zero(terms.b_val):
        mult = _both_active_multipliers(terms)
        if mult is not None:
            l1, l2 = mult
            if l1 >= -_tol(l1) and l2 >= -_tol(l2):
                return CriticalRegion.BOTH_ACTIVE
    # 7: both active, barrier row empty
    if not lgv_zero and F_V <= _tol(F_V) and _zero(Fpb) and _zero(F_b):
        return CriticalRegion.BOTH_CBF_VACUOUS
    # 8: both active, dependent rows on the boundary
    if (
        not lgv_zero
        and _zero(terms.b_val)
        and F_V <= _tol(F_V)
        and not lgb_zero
        and _parallel(Lgb, LgV)
        and all(
            abs(F_V * LgV[i] + F_b * Lgb[i])
            <= _tol(abs(F_V * LgV[i]) + abs(F_b * Lgb[i]))
            for i in range(len(LgV))
        )
    ):
        return CriticalRegion.BOTH_PARALLEL
    # 9: barrier active while the Lyapunov gradient vanishes
    if lgv_zero and F_b <= _tol(F_b) and _pos(Fpb) and _zero(F_V):
        return CriticalRegion.CBF_ACTIVE_CLF_FLAT
    # 10: everything vanishes
    if lgv_zero and _zero(Fpb) and _zero(F_b) and _zero(F_V):
        return CriticalRegion.FULLY_DEGENERATE
    return CriticalRegion.UNCLASSIFIED


def verify_kkt(sol: FilterSolution, terms: FilterTerms) -> float:
    """Max KKT residual: stationarity, primal/dual feasibility, complementarity.

    Complementarity is multiplier-scaled (|l F| / (1 + l)): near degenerate
    boundary points the multipliers grow without bound while the solution
    stays machine-accurate, and the scaled product is the residual any
    production QP solver reports. Indeterminate multipliers contribute zero
    to stationarity (their coefficient vectors vanish in the regions that
    produce them) and skip the complementarity check.
    """
    l1 = sol.lambda1 if sol.lambda1 is not None else 0.0
    l2 = sol.lambda2 if sol.lambda2 is not None else 0.0
    u, s = sol.u_star, sol.s_star
    stat_u = math.sqrt(
        math.fsum(
            (u[i] - terms.pi_x[i] - l1 * terms.Lgb[i] + l2 * terms.LgV[i]) ** 2
            for i in range(len(u))
        )
    )
    stat_s = abs(terms.p * (s - 1.0) - l1 * terms.alpha_b)
    f1, f2 = constraint_values(terms, u, s)
    primal = max(0.0, -f1) + max(0.0, f2)
    dual = max(0.0, -l1) + max(0.0, -l2)
    comp = 0.0
    if sol.lambda1 is not None:
        comp = max(comp, abs(sol.lambda1 * f1) / (1.0 + abs(sol.lambda1)))
    if sol.lambda2 is not None:
        comp = max(comp, abs(sol.lambda2 * f2) / (1.0 + abs(sol.lambda2)))
    return max(stat_u, stat_s, primal, dual, comp)


def _rebind_pi(terms: FilterTerms, pi_x: Sequence[float] | None) -> FilterTerms:
    """Recompute the pi-dependent quantities when a caller overrides pi."""
    if pi_x is None:
        return terms
    pi_x = tuple(map(float, pi_x))
    if pi_x == terms.pi_x:
        return terms
    F_b = dot(terms.Lgb, pi_x) + terms.Lfb + terms.alpha_b
    F_V = terms.LfV + dot(terms.LgV, pi_x) + terms.beta_b * terms.gamma_val
    return terms._replace(pi_x=pi_x, F_b=F_b, F_V=F_V)


def oracle_solve(terms: FilterTerms, pi_x: Sequence[float] | None = None) -> FilterSolution:
    """Ground-truth solution by enumerating the four active sets.

    Variables are z = (u, s); the two constraints are
        -Lgb.u - alpha(b) s <= Lfb        (barrier, F1 >= 0)
         LgV.u              <= -(LfV + beta*gamma)   (Lyapunov, F2 <= 0)
    Infeasibility is reported, never clamped: it witnesses a relaxed
    compatibility violation.
    """
    terms = _rebind_pi(terms, pi_x)
    pi_x = terms.pi_x
    m = len(pi_x)
    z0 = pi_x + (1.0,)
    h_diag = (1.0,) * m + (terms.p,)
    G = [
        [-v for v in terms.Lgb] + [-terms.alpha_b],
        list(terms.LgV) + [0.0],
    ]
    h = [terms.Lfb, -(terms.LfV + terms.beta_b * terms.gamma_val)]
    res = smallqp.solve_qp(h_diag, z0, G, h)
    if not res.feasible:
        return FilterSolution(
            u_star=pi_x, s_star=1.0, lambda1=None, lambda2=None,
            region=classify_region(terms), path="oracle",
            kkt_residual=math.inf, objective=math.inf, feasible=False,
        )
    u = res.z[:m]
    s = res.z[m]
    sol = FilterSolution(
        u_star=u, s_star=s,
        lambda1=res.multipliers[0], lambda2=res.multipliers[1],
        region=classify_region(terms), path="oracle",
        kkt_residual=0.0, objective=res.objective,
    )
    return sol._replace(kkt_residual=verify_kkt(sol, terms))


def closed_form_solve(terms: FilterTerms, pi_x: Sequence[float] | None = None) -> FilterSolution:
    """Piecewise closed-form controller with KKT-checked oracle fallback."""
    terms = _rebind_pi(terms, pi_x)
    region = classify_region(terms)
    if region is CriticalRegion.UNCLASSIFIED:
        return oracle_solve(terms)
    cand = _branch_solution(terms, region)
    if cand is None:
        return oracle_solve(terms)
    resid = verify_kkt(cand, terms)
    if resid > TOL_KKT * (1.0 + abs(cand.objective)):
        return oracle_solve(terms)
    return cand._replace(kkt_residual=resid)


def _branch_solution(terms: FilterTerms, region: CriticalRegion) -> FilterSolution | None:
    pi_x = terms.pi_x
    p = terms.p

    if region in _PASSTHROUGH:
        l1 = 0.0 if region is CriticalRegion.NO_ACTIVE else None
        l2 = 0.0 if region in (CriticalRegion.NO_ACTIVE, CriticalRegion.CBF_VACUOUS) else None
        return _finish(terms, pi_x, 1.0, l1, l2, region)

    if region in (CriticalRegion.CBF_ACTIVE, CriticalRegion.CBF_ACTIVE_CLF_FLAT):
        if terms.F_b_prime <= 0.0:
            return None
        l1 = -terms.F_b / terms.F_b_prime
        u = tuple(pi_x[i] + l1 * terms.Lgb[i] for i in range(len(pi_x)))
        s = 1.0 + l1 * terms.alpha_b / p
        l2 = 0.0 if region is CriticalRegion.CBF_ACTIVE else None
        return _finish(terms, u, s, l1, l2, region)

    if region is CriticalRegion.CLF_ACTIVE:
        G2 = dot(terms.LgV, terms.LgV)
        if G2 <= 0.0:
            return None
        l2 = terms.F_V / G2
        u = tuple(pi_x[i] - l2 * terms.LgV[i] for i in range(len(pi_x)))
        return _finish(terms, u, 1.0, 0.0, l2, region)

    if region is CriticalRegion.BOTH_ACTIVE:
        mult = _both_active_multipliers(terms)
        if mult is None:
            return None
        l1, l2 = mult
        u = tuple(
            pi_x[i] + l1 * terms.Lgb[i] - l2 * terms.LgV[i] for i in range(len(pi_x))
        )
        s = 1.0 + l1 * terms.alpha_b / p
        return _finish(terms, u, s, l1, l2, region)

    if region in (CriticalRegion.BOTH_CBF_VACUOUS, CriticalRegion.BOTH_PARALLEL):
        # Lyapunov-direction branch: the barrier row contributes nothing
        # (vacuous or dependent), so re-derive l2 from stationarity plus the
        # Lyapunov constraint; membership has F_V <= 0, which clamps l2 to 0.
        G2 = dot(terms.LgV, terms.LgV)
        if G2 <= 0.0:
            return None
        l2 = max(0.0, terms.F_V / G2)
        u = tuple(pi_x[i] - l2 * terms.LgV[i] for i in range(len(pi_x)))
        l1 = None if region is CriticalRegion.BOTH_CBF_VACUOUS else 0.0
        return _finish(terms, u, 1.0, l1, l2, region)

    return None


def _finish(terms, u, s, l1, l2, region) -> FilterSolution:
    return FilterSolution(
        u_star=tuple(u), s_star=s, lambda1=l1, lambda2=l2, region=region,
        path="closed-form", kkt_residual=0.0,
        objective=filter_objective(terms, u, s),
    )


def solve(terms: FilterTerms, path: str = "closed") -> FilterSolution:
    """Dispatch helper: path in {"closed", "oracle"}."""
    if path == "oracle":
        return oracle_solve(terms)
    return closed_form_solve(terms)


def feasible_point(terms: FilterTerms, u_clf: Sequence[float]) -> tuple[tuple, float]:
    """Constructive feasible pair from a Lyapunov-feasible input.

    Chooses the slack by the sign of b: s' = 1 - (Lfb + Lgb.u)/alpha(b) for
    b > 0, the -1 offset for b < 0, and s' = 0 on the boundary, where the
    barrier flow itself must be non-negative or relaxed compatibility fails.
    """
    u_clf = tuple(map(float, u_clf))
    _, f2 = constraint_values(terms, u_clf, 1.0)
    if f2 > TOL_FEAS * (1.0 + abs(f2)):
        raise ValueError("u_clf must satisfy the Lyapunov constraint F2(u) <= 0")
    q = terms.Lfb + dot(terms.Lgb, u_clf)
    if _zero(terms.b_val):
        if q < -_tol(q):
            raise RelaxedCompatibilityError(
                f"boundary state {terms.x}: barrier flow {q} is negative for the "
                "given Lyapunov-feasible input"
            )
        s_prime = 0.0
    elif terms.b_val > 0:
        s_prime = 1.0 - q / terms.alpha_b
    else:
        s_prime = -q / terms.alpha_b - 1.0
    f1, _ = constraint_values(terms, u_clf, s_prime)
    if f1 < -TOL_FEAS * (1.0 + abs(f1)):
        raise RelaxedCompatibilityError(
            f"constructive pair infeasible at {terms.x}: F1 = {f1}"
        )
    return u_clf, s_prime
