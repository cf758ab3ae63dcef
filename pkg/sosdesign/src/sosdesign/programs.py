"""The synthesis programs: full feasibility description, the two alternation
half-programs, and the standalone compatibility verification program."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import cvxpy as cp
import numpy as np

from .poly import Poly, grad, norm_sq
from .sos import Block, LinPoly, block_poly_value, gram_block, sos_membership, vector_block

DEFAULT_DEGREES = {
    "sigma1": 2, "lambda1": 1, "lambda2": 4, "sigma2": 8, "sigma3": 8,
    "b": 4, "V": 10, "u_b": 8, "u_V": 8,
}

COEF_CAP = 1e4          # box on free polynomial coefficients
MARGIN_CAP = 1e-2       # Gram-margin objective cap: interior without inflation


@dataclass
class DesignSpec:
    """System and knobs for the synthesis, in design (scaled) coordinates."""

    f: list                        # drift, list of Poly (length n)
    g: list                        # input matrix, n x m of Poly
    s: Poly                        # safe-set polynomial, S = {s >= 0}
    w: Poly                        # domain polynomial, X = {w >= 0}
    degrees: dict = field(default_factory=lambda: dict(DEFAULT_DEGREES))
    eps1: Poly | None = None       # decrease-rate SOS polynomial, no constant term
    eps2: Poly | None = None       # positivity-floor SOS polynomial, no constant term
    max_iters: int = 30
    sdp_tolerance: float = 1e-7
    scale: float = 1.0             # x = scale * y back to original coordinates

    def __post_init__(self):
        n = self.f[0].n
        if self.eps1 is None:
            self.eps1 = norm_sq(n) * 0.1
        if self.eps2 is None:
            self.eps2 = norm_sq(n) * 0.1
        for name, eps in (("eps1", self.eps1), ("eps2", self.eps2)):
            if abs(eps.constant_term()) > 1e-12:
                raise ValueError(f"{name} must have no constant term")
        for key in DEFAULT_DEGREES:
            if key not in self.degrees:
                raise ValueError(f"missing degree for {key}")
            if self.degrees[key] <= 0:
                raise ValueError(f"degree for {key} must be positive")

    @property
    def n(self) -> int:
        return self.f[0].n

    @property
    def m(self) -> int:
        return len(self.g[0])


@dataclass
class SolveStats:
    feasible: bool
    status: str
    solve_time: float
    margin: float | None = None


def _caps(blocks: dict[str, Block]):
    return [cp.abs(b.var) <= COEF_CAP for b in blocks.values() if b.kind == "vector"]


def _solve_problem(prob: cp.Problem) -> SolveStats:
    t0 = time.time()
    status = "solver-error"
    try:
        prob.solve(solver=cp.CLARABEL, max_iter=500)
        status = prob.status
    except Exception:
        try:
            prob.solve(solver=cp.SCS, eps=1e-8, max_iters=100_000)
            status = prob.status
        except Exception as exc:  # noqa: BLE001 - report, never raise mid-iteration
            status = f"solver-error: {exc}"
    feasible = status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
    return SolveStats(feasible=feasible, status=str(status), solve_time=time.time() - t0)


def _solve_blocks(constraints, blocks, margin=None) -> SolveStats:
    """Solve a membership system; with a margin variable, maximize it (capped)
    so Grams land strictly inside the cone."""
    if margin is None:
        return _solve_problem(cp.Problem(cp.Minimize(0), constraints + _caps(blocks)))
    cons = constraints + _caps(blocks) + [margin <= MARGIN_CAP, margin >= -1.0]
    stats = _solve_problem(cp.Problem(cp.Maximize(margin), cons))
    if margin.value is not None:
        stats.margin = float(margin.value)
    return stats


def lin_flow(gradient: Sequence[Poly], f: Sequence[Poly], g,
             u_blocks: Sequence[Block]) -> LinPoly:
    """grad . (f + g u) with decision-block controller entries."""
    n = len(f)
    m = len(g[0])
    num = gradient[0].n
    base = Poly.zero(num)
    for i in range(n):
        base = base + gradient[i] * f[i]
    expr = LinPoly.from_poly(base)
    for j in range(m):
        coef = Poly.zero(num)
        for i in range(n):
            coef = coef + gradient[i] * g[i][j]
        expr = expr + LinPoly.from_block(u_blocks[j]).mul_poly(coef)
    return expr


def fixed_flow(gradient: Sequence[Poly], f: Sequence[Poly], g,
               u: Sequence[Poly]) -> Poly:
    """grad . (f + g u) with a fixed polynomial controller."""
    n = len(f)
    m = len(g[0])
    out = Poly.zero(gradient[0].n)
    for i in range(n):
        acc = f[i]
        for j in range(m):
            acc = acc + g[i][j] * u[j]
        out = out + gradient[i] * acc
    return out


def decision_flow(p_block: Block, f, g, u: Sequence[Poly]) -> LinPoly:
    """grad p . (f + g u) where the differentiated polynomial is a decision
    block and the controller is fixed."""
    n = len(f)
    m = len(g[0])
    closed = []
    for i in range(n):
        acc = f[i]
        for j in range(m):
            acc = acc + g[i][j] * u[j]
        closed.append(acc)
    out = LinPoly(f[0].n)
    ent: dict[tuple, float] = {}
    for col, e in enumerate(p_block.basis):
        for i in range(n):
            if e[i] == 0:
                continue
            de = list(e)
            de[i] -= 1
            for fe, fc in closed[i].terms.items():
                key = (tuple(a + b for a, b in zip(de, fe)), col)
                ent[key] = ent.get(key, 0.0) + e[i] * fc
    out.entries[p_block.name] = ent
    return out


def solve_iteration_A(spec: DesignSpec, b_prev: Poly, V_prev: Poly) -> tuple[dict | None, SolveStats]:
    """Fix (b, V); solve for multipliers and controllers (convex)."""
    n, m = spec.n, spec.m
    d = spec.degrees
    gb = grad(b_prev)
    gV = grad(V_prev)

    blocks: dict[str, Block] = {}
    sigma2 = gram_block(n, d["sigma2"], "sigma2_A")
    blocks["sigma2_A"] = sigma2
    lam1 = vector_block(n, d["lambda1"], "lambda1")
    lam2 = vector_block(n, d["lambda2"], "lambda2")
    u_b = [vector_block(n, d["u_b"], f"u_b{j}") for j in range(m)]
    # no constant term: the designed pair then supports the small-control property
    u_V = [vector_block(n, d["u_V"], f"u_V{j}", min_degree=1) for j in range(m)]
    for blk in (lam1, lam2, *u_b, *u_V):
        blocks[blk.name] = blk

    margin = cp.Variable(name="A_margin")
    cons = []
    # barrier flow on the boundary: grad b . (f + g u_b) + lam1 b in SOS
    expr_c = lin_flow(gb, spec.f, spec.g, u_b) + LinPoly.from_block(lam1).mul_poly(b_prev)
    cons += sos_membership(expr_c, "A_barrier_flow", blocks, margin=margin)
    # strict Lyapunov decrease on the domain
    expr_d = (
        -lin_flow(gV, spec.f, spec.g, u_V)
        - LinPoly.from_block(sigma2).mul_poly(spec.w)
        - LinPoly.from_poly(spec.eps1)
    )
    cons += sos_membership(expr_d, "A_lyap_decrease", blocks, margin=margin, drop_constant=True)
    # Lyapunov non-increase along the barrier controller on the boundary
    expr_f = -lin_flow(gV, spec.f, spec.g, u_b) - LinPoly.from_block(lam2).mul_poly(b_prev)
    cons += sos_membership(expr_f, "A_lyap_boundary", blocks, margin=margin)

    stats = _solve_blocks(cons, blocks, margin=margin)
    if not stats.feasible:
        return None, stats
    return {
        "sigma2": block_poly_value(sigma2),
        "lambda1": block_poly_value(lam1),
        "lambda2": block_poly_value(lam2),
        "u_b": [block_poly_value(u) for u in u_b],
        "u_V": [block_poly_value(u) for u in u_V],
    }, stats


def solve_iteration_B(spec: DesignSpec, mults: dict) -> tuple[dict | None, SolveStats]:
    """Fix multipliers and controllers; solve for (sigma_i, b, V) (convex)."""
    n = spec.n
    d = spec.degrees
    lam1, lam2 = mults["lambda1"], mults["lambda2"]
    u_b, u_V = mults["u_b"], mults["u_V"]

    blocks: dict[str, Block] = {}
    sigma1 = gram_block(n, d["sigma1"], "sigma1_B")
    sigma2 = gram_block(n, d["sigma2"], "sigma2_B")
    sigma3 = gram_block(n, d["sigma3"], "sigma3_B")
    b = vector_block(n, d["b"], "b")
    V = vector_block(n, d["V"], "V", min_degree=2)  # V(0) = 0 with flat origin
    for blk in (sigma1, sigma2, sigma3, b, V):
        blocks[blk.name] = blk

    origin = (0,) * n
    cons = [b.var[b.basis.index(origin)] >= 0.01]  # strict positivity margin at 0

    b_lin = LinPoly.from_block(b)
    V_lin = LinPoly.from_block(V)

    margin = cp.Variable(name="B_margin")
    # containment: -b + sigma1 s in SOS
    expr_c = (-b_lin) + LinPoly.from_block(sigma1).mul_poly(spec.s)
    cons += sos_membership(expr_c, "B_containment", blocks, margin=margin)
    # barrier flow with the fixed controller: linear in b's coefficients
    expr_d = decision_flow(b, spec.f, spec.g, u_b) + b_lin.mul_poly(lam1)
    cons += sos_membership(expr_d, "B_barrier_flow", blocks, margin=margin)
    # Lyapunov decrease with the fixed controller
    expr_e = (
        -decision_flow(V, spec.f, spec.g, u_V)
        - LinPoly.from_block(sigma2).mul_poly(spec.w)
        - LinPoly.from_poly(spec.eps1)
    )
    cons += sos_membership(expr_e, "B_lyap_decrease", blocks, margin=margin, drop_constant=True)
    # positivity floor: V - eps2 - sigma3 w in SOS
    expr_f = V_lin - LinPoly.from_poly(spec.eps2) - LinPoly.from_block(sigma3).mul_poly(spec.w)
    cons += sos_membership(expr_f, "B_positivity", blocks, margin=margin, drop_constant=True)
    # Lyapunov non-increase along the barrier controller
    expr_g = -decision_flow(V, spec.f, spec.g, u_b) - b_lin.mul_poly(lam2)
    cons += sos_membership(expr_g, "B_lyap_boundary", blocks, margin=margin)

    stats = _solve_blocks(cons, blocks, margin=margin)
    if not stats.feasible:
        return None, stats
    return {
        "sigma1": block_poly_value(sigma1),
        "sigma2": block_poly_value(sigma2),
        "sigma3": block_poly_value(sigma3),
        "b": block_poly_value(b),
        "V": block_poly_value(V),
    }, stats


def solve_certification(spec: DesignSpec, b: Poly, V: Poly,
                        u_b: Sequence[Poly], u_V: Sequence[Poly]) -> tuple[dict | None, SolveStats]:
    """Final multiplier pass: with (b, V, u_b, u_V) fixed, re-derive all five
    multipliers jointly with maximal Gram margins. This is the multiplier set
    the artifact ships; running it on the cleaned polynomials absorbs the
    coefficient-pruning perturbation into the multipliers' slack."""
    n = spec.n
    d = spec.degrees
    gb = grad(b)
    gV = grad(V)

    blocks: dict[str, Block] = {}
    sigma1 = gram_block(n, d["sigma1"], "sigma1_C")
    sigma2 = gram_block(n, d["sigma2"], "sigma2_C")
    sigma3 = gram_block(n, d["sigma3"], "sigma3_C")
    lam1 = vector_block(n, d["lambda1"], "lambda1_C")
    lam2 = vector_block(n, d["lambda2"], "lambda2_C")
    for blk in (sigma1, sigma2, sigma3, lam1, lam2):
        blocks[blk.name] = blk

    margin = cp.Variable(name="C_margin")
    cons = []
    expr_c = LinPoly.from_poly(-1.0 * b) + LinPoly.from_block(sigma1).mul_poly(spec.s)
    cons += sos_membership(expr_c, "C_containment", blocks, margin=margin)
    expr_d = LinPoly.from_poly(fixed_flow(gb, spec.f, spec.g, u_b)) \
        + LinPoly.from_block(lam1).mul_poly(b)
    cons += sos_membership(expr_d, "C_barrier_flow", blocks, margin=margin)
    expr_e = (
        LinPoly.from_poly(-1.0 * fixed_flow(gV, spec.f, spec.g, u_V) - spec.eps1)
        - LinPoly.from_block(sigma2).mul_poly(spec.w)
    )
    cons += sos_membership(expr_e, "C_lyap_decrease", blocks, margin=margin, drop_constant=True)
    expr_f = (
        LinPoly.from_poly(V - spec.eps2)
        - LinPoly.from_block(sigma3).mul_poly(spec.w)
    )
    cons += sos_membership(expr_f, "C_positivity", blocks, margin=margin, drop_constant=True)
    expr_g = LinPoly.from_poly(-1.0 * fixed_flow(gV, spec.f, spec.g, u_b)) \
        - LinPoly.from_block(lam2).mul_poly(b)
    cons += sos_membership(expr_g, "C_lyap_boundary", blocks, margin=margin)

    stats = _solve_blocks(cons, blocks, margin=margin)
    if not stats.feasible:
        return None, stats
    return {
        "sigma1": block_poly_value(sigma1),
        "sigma2": block_poly_value(sigma2),
        "sigma3": block_poly_value(sigma3),
        "lambda1": block_poly_value(lam1),
        "lambda2": block_poly_value(lam2),
    }, stats


def build_full_program(spec: DesignSpec) -> dict:
    """Structural description of the one-shot (bilinear) program: constraint
    names and degree checks, raised before any solve when inconsistent."""
    d = spec.degrees
    deg_g = max(p.degree() for row in spec.g for p in row)
    deg_f = max(p.degree() for p in spec.f)
    checks = {
        "containment": max(d["b"], d["sigma1"] + spec.s.degree()),
        "barrier_flow": max(d["b"] - 1 + max(deg_f, deg_g + d["u_b"]),
                            d["lambda1"] + d["b"]),
        "lyap_decrease": max(d["V"] - 1 + max(deg_f, deg_g + d["u_V"]),
                             d["sigma2"] + spec.w.degree(), spec.eps1.degree()),
        "positivity": max(d["V"], spec.eps2.degree(), d["sigma3"] + spec.w.degree()),
        "lyap_boundary": max(d["V"] - 1 + max(deg_f, deg_g + d["u_b"]),
                             d["lambda2"] + d["b"]),
    }
    for name, deg in checks.items():
        if deg <= 0:
            raise ValueError(f"constraint {name} has non-positive degree {deg}")
    return {
        "constraints": list(checks),
        "gram_degrees": {k: (v + 1) // 2 for k, v in checks.items()},
        "unknowns": ["sigma1", "sigma2", "sigma3", "lambda1", "lambda2",
                     "b", "V", "u_b", "u_V"],
    }


def verify_compatibility(
    f, g, b: Poly, V: Poly,
    deg_u: int = 8, deg_lambda1: int | None = None, deg_lambda2: int | None = None,
) -> tuple[str, dict | None, SolveStats]:
    """Single-shot certification that (b, V) admit a shared boundary controller.

    Returns ("true", multipliers, stats) on success; ("unknown", None, stats)
    on solver failure, never "false": infeasibility of this sufficient program
    does not refute compatibility.
    """
    n = b.n
    m = len(g[0])
    deg_g = max(p.degree() for row in g for p in row)
    deg_f = max(p.degree() for p in f)
    flow_deg_b = b.degree() - 1 + max(deg_f, deg_g + deg_u)
    flow_deg_V = V.degree() - 1 + max(deg_f, deg_g + deg_u)
    if deg_lambda1 is None:
        deg_lambda1 = max(1, flow_deg_b - b.degree())
    if deg_lambda2 is None:
        deg_lambda2 = max(1, flow_deg_V - b.degree())

    blocks: dict[str, Block] = {}
    lam1 = vector_block(n, deg_lambda1, "v_lambda1")
    lam2 = vector_block(n, deg_lambda2, "v_lambda2")
    u = [vector_block(n, deg_u, f"v_u{j}") for j in range(m)]
    for blk in (lam1, lam2, *u):
        blocks[blk.name] = blk

    margin = cp.Variable(name="V_margin")
    cons = []
    expr_c = lin_flow(grad(b), f, g, u) + LinPoly.from_block(lam1).mul_poly(b)
    cons += sos_membership(expr_c, "V_barrier_flow", blocks, margin=margin)
    expr_g = -lin_flow(grad(V), f, g, u) - LinPoly.from_block(lam2).mul_poly(b)
    cons += sos_membership(expr_g, "V_lyap_boundary", blocks, margin=margin)

    stats = _solve_blocks(cons, blocks, margin=margin)
    if not stats.feasible:
        return "unknown", None, stats
    return "true", {
        "lambda1": block_poly_value(lam1),
        "lambda2": block_poly_value(lam2),
        "u": [block_poly_value(uj) for uj in u],
    }, stats
