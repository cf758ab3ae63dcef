"""Numeric relaxed-compatibility verification on the barrier boundary.

Relaxed compatibility asks for one input that keeps the barrier flow
non-negative and the Lyapunov flow non-positive at every point of the zero
level set of b. Each boundary sample reduces to a two-half-space feasibility
question in the input, which is decided analytically.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from . import smallqp
from .filter_core import PARALLEL_TOL
from .poly import Polynomial, dot
from .problem import CertificateProblem, grad_tol

BOUNDARY_TOL = 1e-10
_NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class BoundarySample:
    x: tuple
    feasible: bool
    witness_u: tuple | None
    conflict_kind: str | None    # cbf-degenerate | clf-degenerate | parallel-conflict
    margin: float

    def to_json(self) -> dict:
        return {
            "x": list(self.x),
            "feasible": self.feasible,
            "witness_u": list(self.witness_u) if self.witness_u is not None else None,
            "conflict_kind": self.conflict_kind,
            "margin": self.margin,
        }


@dataclass
class CompatReport:
    samples: list[BoundarySample]
    all_feasible: bool
    min_margin: float
    skipped_seeds: int = 0
    mode: str = "relaxed"

    def to_json(self) -> dict:
        return {
            "samples": [s.to_json() for s in self.samples],
            "all_feasible": self.all_feasible,
            "min_margin": self.min_margin,
            "skipped_seeds": self.skipped_seeds,
            "mode": self.mode,
        }


def halfspace_pair_feasible(
    a: Sequence[float], c1: float, d: Sequence[float], c2: float,
    zero_tol: float = 1e-12,
) -> tuple[bool, dict]:
    """Decide {u : a.u >= -c1} int {u : d.u <= -c2} analytically.

    Infeasible exactly when a vanishes with c1 < 0, d vanishes with c2 > 0,
    or a = t d with t > 0 and t c2 > c1. The feasible case returns the
    least-norm point of the intersection as a witness; the certificate dict
    always carries a robustness margin (the parallel-direction gap where one
    exists, +inf otherwise).
    """
    a = tuple(map(float, a))
    d = tuple(map(float, d))
    na2, nd2 = dot(a, a), dot(d, d)
    a_zero = math.sqrt(na2) <= zero_tol
    d_zero = math.sqrt(nd2) <= zero_tol

    if a_zero and c1 < 0:
        return False, {"conflict_kind": "cbf-degenerate", "margin": c1}
    if d_zero and c2 > 0:
        return False, {"conflict_kind": "clf-degenerate", "margin": -c2}

    margin = math.inf
    if not a_zero and not d_zero:
        ad = dot(a, d)
        if ad > 0 and ad * ad >= (1.0 - PARALLEL_TOL) * na2 * nd2:
            t = ad / nd2      # a = t d with t > 0
            margin = c1 - t * c2
            if t * c2 > c1 + 1e-15 * (1.0 + abs(c1) + abs(t * c2)):
                return False, {"conflict_kind": "parallel-conflict", "margin": margin}
    elif a_zero:
        margin = c1
    elif d_zero:
        margin = -c2

    witness = _least_norm_witness(a, c1, d, c2, a_zero, d_zero)
    return True, {"conflict_kind": None, "margin": margin, "witness": witness}


def _least_norm_witness(a, c1, d, c2, a_zero, d_zero) -> tuple:
    m = len(a)
    G, h = [], []
    if not a_zero:
        G.append([-v for v in a])
        h.append(c1)
    if not d_zero:
        G.append(list(d))
        h.append(-c2)
    if not G:
        return (0.0,) * m
    res = smallqp.solve_qp((1.0,) * m, (0.0,) * m, G, h)
    if not res.feasible:
        # Parallel near-boundary cases can defeat the enumerator's dual test;
        # fall back to projecting onto the tighter constraint.
        if not d_zero:
            lam = max(0.0, (c2 + 0.0) / dot(d, d))
            return tuple(-lam * v for v in d)
        return (0.0,) * m
    return res.z


def sample_boundary(
    b: Polynomial,
    count: int,
    seed: int,
    box: tuple[float, float] = (-10.0, 10.0),
) -> tuple[list[tuple], int]:
    """States with |b| <= 1e-10 by Newton projection along grad b from random
    seeds in the box. Returns (samples, skipped) where skipped counts seeds
    whose projection did not converge within the iteration cap."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = random.Random(seed)
    n = b.num_vars
    b_fn = b.compile()
    grads = [b.diff(i).compile() for i in range(n)]
    lo, hi = box
    samples: list[tuple] = []
    skipped = 0
    attempts = 0
    max_attempts = 50 * count
    while len(samples) < count and attempts < max_attempts:
        attempts += 1
        x = [rng.uniform(lo, hi) for _ in range(n)]
        ok = False
        for _ in range(_NEWTON_MAX_ITER):
            val = b_fn(x)
            if abs(val) <= BOUNDARY_TOL:
                ok = True
                break
            g = [fn(x) for fn in grads]
            g2 = dot(g, g)
            if g2 < 1e-18:
                break
            step = val / g2
            x = [xi - step * gi for xi, gi in zip(x, g)]
        if ok:
            samples.append(tuple(x))
        else:
            skipped += 1
    return samples, skipped


def detect_circle(b: Polynomial) -> tuple[tuple[float, float], float] | None:
    """Recognize b = ||x - c||^2 - r^2 in two variables; None otherwise."""
    if b.num_vars != 2 or b.degree() != 2:
        return None
    t = b.terms
    q1, q2 = t.get((2, 0), 0.0), t.get((0, 2), 0.0)
    if abs(q1 - q2) > 1e-12 or q1 <= 0 or t.get((1, 1), 0.0) != 0.0:
        return None
    cx = -t.get((1, 0), 0.0) / (2 * q1)
    cy = -t.get((0, 1), 0.0) / (2 * q1)
    r2 = cx * cx + cy * cy - t.get((0, 0), 0.0) / q1
    if r2 <= 0:
        return None
    return (cx, cy), math.sqrt(r2)


def boundary_grid(b: Polynomial, count: int) -> list[tuple]:
    """Deterministic angular grid on a circular boundary (empty otherwise)."""
    circ = detect_circle(b)
    if circ is None:
        return []
    (cx, cy), r = circ
    out = []
    for k in range(count):
        th = 2.0 * math.pi * k / count
        out.append((cx + r * math.sin(th), cy - r * math.cos(th)))
    return out


def check_relaxed_compatibility(
    prob: CertificateProblem,
    count: int = 360,
    seed: int = 0,
    mode: str = "relaxed",
    box: tuple[float, float] = (-10.0, 10.0),
) -> CompatReport:
    """Run the half-space feasibility test on boundary samples.

    mode "relaxed" uses the boundary condition's raw offsets (Lfb, LfV);
    mode "strict" uses the full constraint offsets (Lfb + alpha(b),
    LfV + gamma) of the classic compatibility definition.
    """
    if mode not in ("relaxed", "strict"):
        raise ValueError("mode must be 'relaxed' or 'strict'")
    grid = boundary_grid(prob.b, count)
    if grid:
        points, skipped = grid, 0
        newton, extra_skipped = sample_boundary(prob.b, count, seed, box)
        points = points + newton
        skipped += extra_skipped
    else:
        points, skipped = sample_boundary(prob.b, count, seed, box)

    samples = []
    for x in points:
        terms = prob.eval_terms(x)
        if mode == "relaxed":
            c1, c2 = terms.Lfb, terms.LfV
        else:
            c1 = terms.Lfb + terms.alpha_b
            c2 = terms.LfV + terms.gamma_val
        tol = grad_tol(x)
        feasible, info = halfspace_pair_feasible(
            terms.Lgb, c1, terms.LgV, c2, zero_tol=tol
        )
        samples.append(
            BoundarySample(
                x=tuple(x),
                feasible=feasible,
                witness_u=tuple(info["witness"]) if feasible else None,
                conflict_kind=info.get("conflict_kind"),
                margin=info["margin"],
            )
        )
    all_feasible = all(s.feasible for s in samples)
    min_margin = min((s.margin for s in samples), default=math.inf)
    return CompatReport(
        samples=samples, all_feasible=all_feasible, min_margin=min_margin,
        skipped_seeds=skipped, mode=mode,
    )


@dataclass
class ScsReport:
    """Strict-complementary-slackness diagnostic over a state grid."""

    status: str                      # "vacuous" if no degenerate grid point
    margin: float                    # min of -(LfV + gamma) over degenerate points
    degenerate_points: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "margin": None if math.isinf(self.margin) else self.margin,
            "degenerate_points": [list(p) for p in self.degenerate_points],
        }


def scs_margin(
    prob: CertificateProblem,
    grid: Sequence[Sequence[float]],
    origin_radius: float = 0.05,
) -> ScsReport:
    """min over grid points with LgV = 0 (off the origin) of -(LfV + gamma).

    A positive margin numerically supports strict complementary slackness on
    the grid; no degenerate points makes the condition vacuous there.
    """
    worst = math.inf
    points = []
    for x in grid:
        if math.sqrt(sum(v * v for v in x)) <= origin_radius:
            continue
        terms = prob.eval_terms(x)
        if math.sqrt(dot(terms.LgV, terms.LgV)) <= grad_tol(x):
            points.append(tuple(x))
            worst = min(worst, -(terms.LfV + terms.gamma_val))
    if not points:
        return ScsReport(status="vacuous", margin=math.inf)
    return ScsReport(status="checked", margin=worst, degenerate_points=points)


def scp_diagnostic(u_V: Sequence[Polynomial], radii=(1e-1, 1e-2, 1e-3)) -> dict:
    """Numeric small-control-property diagnostic for a polynomial controller:
    no constant term and sup ||u_V|| -> 0 along shrinking origin balls."""
    n = u_V[0].num_vars
    const = [p.constant_term() for p in u_V]
    sups = []
    for r in radii:
        worst = 0.0
        for k in range(64):
            th = 2 * math.pi * k / 64
            x = [r * math.cos(th), r * math.sin(th)] if n == 2 else [
                r * math.cos(th)
            ] + [r * math.sin(th) / max(1, n - 1)] * (n - 1)
            val = math.sqrt(sum(p.evaluate(x) ** 2 for p in u_V))
            worst = max(worst, val)
        sups.append(worst)
    vanishing = all(abs(c) <= 1e-12 for c in const) and all(
        sups[i + 1] < sups[i] or sups[i] == 0.0 for i in range(len(sups) - 1)
    )
    return {"constant_terms": const, "sup_norms": sups, "supports_scp": vanishing}
