"""Closed-loop simulation and equilibrium analysis.

Classic fixed-step RK4 with the filter re-solved at every stage evaluation,
plus monitors for forward invariance and Lyapunov decrease, interior/boundary
equilibrium searches, and a sampling-based region-of-attraction certificate.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import compat
from .baselines import BaselineKind, baseline_solve
from .filter_core import FilterSolution, closed_form_solve, oracle_solve
from .poly import dot
from .problem import CertificateProblem, FilterTerms

FILTER_NAMES = ("ours", "ours-oracle", "ames", "tan", "mestres")

POS_TOL = 1e-4       # origin-convergence threshold on ||x||
VEL_TOL = 1e-6       # boundary-capture threshold on ||xdot||
VEL_STREAK = 100     # consecutive slow steps before declaring capture


class SolverInfeasible(RuntimeError):
    def __init__(self, x):
        super().__init__(f"filter infeasible at state {tuple(x)}")
        self.x = tuple(x)


def make_controller(prob: CertificateProblem, name: str = "ours") -> Callable[[Sequence[float]], FilterSolution]:
    """Bind a filter to the problem: ours (closed form with oracle fallback),
    ours-oracle, or one of the baseline reconstructions."""
    if name == "ours":
        def ctrl(x):
            return closed_form_solve(prob.eval_terms(x))
    elif name == "ours-oracle":
        def ctrl(x):
            return oracle_solve(prob.eval_terms(x))
    elif name == "ames":
        kind = BaselineKind("slack-clf-qp")

        def ctrl(x):
            return baseline_solve(kind, prob.eval_terms(x))
    elif name == "tan":
        kind = BaselineKind("slack-clf-qp-with-stabilizing-pi")

        def ctrl(x):
            return baseline_solve(kind, prob.eval_terms(x))
    elif name == "mestres":
        kind = BaselineKind("penalty-lifted-clf")

        def ctrl(x):
            return baseline_solve(kind, prob.eval_terms(x))
    else:
        raise ValueError(f"unknown filter {name!r}; expected one of {FILTER_NAMES}")
    return ctrl


@dataclass
class Trajectory:
    times: list[float]
    states: list[tuple]
    inputs: list[tuple]
    s_vals: list[float]
    b_vals: list[float]
    V_vals: list[float]
    Vdot_vals: list[float]
    regions: list[str]
    terminal_reason: str        # horizon | converged-to-origin | converged-to-boundary-point | solver-infeasible
    infeasible_state: tuple | None = None
    filter_name: str = "ours"

    def terminal_state(self) -> tuple:
        return self.states[-1]

    def min_b(self) -> float:
        return min(self.b_vals)

    def to_json(self) -> dict:
        return {
            "times": self.times,
            "states": [list(s) for s in self.states],
            "inputs": [list(u) for u in self.inputs],
            "s_vals": self.s_vals,
            "b_vals": self.b_vals,
            "V_vals": self.V_vals,
            "Vdot_vals": self.Vdot_vals,
            "regions": self.regions,
            "terminal_reason": self.terminal_reason,
            "infeasible_state": list(self.infeasible_state) if self.infeasible_state else None,
            "filter_name": self.filter_name,
        }


def simulate(
    prob: CertificateProblem,
    x0: Sequence[float],
    filter_name: str = "ours",
    dt: float = 1e-3,
    T: float = 20.0,
    pos_tol: float = POS_TOL,
    vel_tol: float = VEL_TOL,
    vel_streak: int = VEL_STREAK,
    controller: Callable[[Sequence[float]], FilterSolution] | None = None,
) -> Trajectory:
    """Integrate xdot = f + g u*(x) by RK4, re-solving the filter at every stage."""
    if dt <= 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    ctrl = controller if controller is not None else make_controller(prob, filter_name)
    system = prob.system
    n = system.n
    gradV_fns = prob.gradV_fns
    b_fn, V_fn = prob.b_fn, prob.V_fn

    def flow(x) -> tuple[tuple, FilterSolution]:
        sol = ctrl(x)
        if not sol.feasible:
            raise SolverInfeasible(x)
        return system.xdot(x, sol.u_star), sol

    x = tuple(map(float, x0))
    steps = int(round(T / dt))
    times, states, inputs = [], [], []
    s_vals, b_vals, V_vals, Vdot_vals, regions = [], [], [], [], []
    reason = "horizon"
    infeasible_state = None
    slow = 0

    t = 0.0
    for _ in range(steps + 1):
        try:
            k1, sol = flow(x)
        except SolverInfeasible as exc:
            reason, infeasible_state = "solver-infeasible", exc.x
            break
        times.append(t)
        states.append(x)
        inputs.append(sol.u_star)
        s_vals.append(sol.s_star)
        b_vals.append(b_fn(x))
        V_vals.append(V_fn(x))
        Vdot_vals.append(dot([fn(x) for fn in gradV_fns], k1))
        regions.append(sol.region.name)

        if math.sqrt(sum(v * v for v in x)) <= pos_tol:
            reason = "converged-to-origin"
            break
        speed = math.sqrt(sum(v * v for v in k1))
        slow = slow + 1 if speed <= vel_tol else 0
        if slow >= vel_streak:
            reason = "converged-to-boundary-point"
            break
        if t >= T:
            reason = "horizon"
            break

        try:
            x2 = tuple(x[i] + 0.5 * dt * k1[i] for i in range(n))
            k2, _ = flow(x2)
            x3 = tuple(x[i] + 0.5 * dt * k2[i] for i in range(n))
            k3, _ = flow(x3)
            x4 = tuple(x[i] + dt * k3[i] for i in range(n))
            k4, _ = flow(x4)
        except SolverInfeasible as exc:
            reason, infeasible_state = "solver-infeasible", exc.x
            break
        x = tuple(
            x[i] + dt * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) / 6.0 for i in range(n)
        )
        t += dt

    return Trajectory(
        times=times, states=states, inputs=inputs, s_vals=s_vals, b_vals=b_vals,
        V_vals=V_vals, Vdot_vals=Vdot_vals, regions=regions,
        terminal_reason=reason, infeasible_state=infeasible_state,
        filter_name=filter_name,
    )


@dataclass
class Monitors:
    min_b: float
    max_Vdot_interior: float | None    # None when no interior sample qualifies
    lipschitz_estimate: float

    def to_json(self) -> dict:
        return {
            "min_b": self.min_b,
            "max_Vdot_interior": self.max_Vdot_interior,
            "lipschitz_estimate": self.lipschitz_estimate,
        }


def monitors(traj: Trajectory, b_tol: float = 1e-9, x_tol: float = 1e-3) -> Monitors:
    """Forward-invariance and Lyapunov-decrease monitors plus a finite-
    difference Lipschitz estimate of the control along the path."""
    min_b = min(traj.b_vals)
    max_vdot = None
    for x, b, vd in zip(traj.states, traj.b_vals, traj.Vdot_vals):
        if b > b_tol and math.sqrt(sum(v * v for v in x)) > x_tol:
            max_vdot = vd if max_vdot is None else max(max_vdot, vd)
    lip = 0.0
    for k in range(len(traj.states) - 1):
        dx = math.sqrt(
            sum((a - b) ** 2 for a, b in zip(traj.states[k + 1], traj.states[k]))
        )
        if dx < 1e-12:
            continue
        du = math.sqrt(
            sum((a - b) ** 2 for a, b in zip(traj.inputs[k + 1], traj.inputs[k]))
        )
        lip = max(lip, du / dx)
    return Monitors(min_b=min_b, max_Vdot_interior=max_vdot, lipschitz_estimate=lip)


@dataclass
class EquilibriumReport:
    interior_candidates: list          # (state, speed) pairs
    boundary_equilibria: list          # dicts: state, classification, residual
    origin_included: bool

    def to_json(self) -> dict:
        return {
            "interior_candidates": [
                {"x": list(x), "speed": s} for x, s in self.interior_candidates
            ],
            "boundary_equilibria": self.boundary_equilibria,
            "origin_included": self.origin_included,
        }


def _speed(prob, ctrl, x) -> float:
    sol = ctrl(x)
    if not sol.feasible:
        return math.inf
    xd = prob.system.xdot(x, sol.u_star)
    return math.sqrt(sum(v * v for v in xd))


def scan_interior_equilibria(
    prob: CertificateProblem,
    filter_name: str = "ours",
    box: tuple[float, float] = (-8.0, 8.0),
    resolution: float = 0.02,
    speed_tol: float = 1e-6,
    origin_radius: float = 0.05,
    coarse_tol: float = 0.05,
) -> list[tuple[tuple, float]]:
    """Grid scan for interior equilibria away from the origin.

    Grid points with b > 0 and slow closed-loop flow are Newton-polished;
    only polished points with speed <= speed_tol survive (the raw grid never
    lands within 1e-6 of an equilibrium ring, so candidates need polish).
    """
    ctrl = make_controller(prob, filter_name)
    b_fn = prob.b.compile()
    lo, hi = box
    n = prob.n
    if n != 2:
        raise NotImplementedError("interior scan is implemented for planar systems")
    found: list[tuple[tuple, float]] = []
    steps = int(round((hi - lo) / resolution))
    for i in range(steps + 1):
        x1 = lo + i * resolution
        for j in range(steps + 1):
            x2 = lo + j * resolution
            x = (x1, x2)
            if b_fn(x) <= 1e-9 or math.hypot(x1, x2) <= origin_radius:
                continue
            sp = _speed(prob, ctrl, x)
            if sp > coarse_tol * (1.0 + math.hypot(x1, x2)):
                continue
            root = _polish_equilibrium(prob, ctrl, x)
            if root is None:
                continue
            rx, rsp = root
            if (
                rsp <= speed_tol
                and b_fn(rx) > 1e-9
                and math.hypot(*rx) > origin_radius
                and all(lo <= v <= hi for v in rx)
                and all(math.hypot(rx[0] - fx[0], rx[1] - fx[1]) > 2 * resolution for fx, _ in found)
            ):
                found.append((rx, rsp))
    return found


def _polish_equilibrium(prob, ctrl, x0, iters: int = 30):
    """Damped Newton on xdot(x) = 0 with finite-difference Jacobian."""
    n = prob.n
    x = list(x0)

    def xdot(pt):
        sol = ctrl(pt)
        if not sol.feasible:
            return None
        return prob.system.xdot(pt, sol.u_star)

    for _ in range(iters):
        fx = xdot(x)
        if fx is None:
            return None
        sp = math.sqrt(sum(v * v for v in fx))
        if sp <= 1e-12:
            break
        h = 1e-7 * (1.0 + sp)
        J = []
        for i in range(n):
            xp = list(x)
            xp[i] += h
            fp = xdot(xp)
            if fp is None:
                return None
            J.append([(fp[r] - fx[r]) / h for r in range(n)])
        # J as assembled holds columns; transpose into rows.
        Jr = [[J[c][r] for c in range(n)] for r in range(n)]
        from .smallqp import solve_linear, solve_min_norm

        step = solve_linear(Jr, list(fx)) or solve_min_norm(Jr, list(fx))
        if step is None:
            return None
        limit = max(abs(v) for v in step)
        scale = 1.0 if limit <= 0.5 else 0.5 / limit
        x = [x[i] - scale * step[i] for i in range(n)]
    fx = xdot(x)
    if fx is None:
        return None
    return tuple(x), math.sqrt(sum(v * v for v in fx))


def find_boundary_equilibria(
    prob: CertificateProblem,
    filter_name: str = "ours",
    seeds: int = 72,
    seed: int = 0,
    residual_tol: float = 1e-6,
    boundary_tol: float = 1e-8,
) -> EquilibriumReport:
    """Locate boundary equilibria: points of the zero level set that interior
    trajectories can converge to.

    Trajectories live in the open invariant set, so reachable boundary rest
    points are where the interior-limit tangential flow vanishes. The search
    therefore runs Newton on {b = eta, tangent . xdot = 0} on a moderately
    inset shell (where the rate-shaping term still discriminates), continues
    each root as eta -> 0, and finally projects onto b = 0. Evaluating
    directly on b = 0 would degenerate: the shaping term vanishes there, and
    for some problems that makes the entire boundary stationary for the
    on-boundary field even though no interior trajectory stops anywhere else.
    """
    if prob.n != 2:
        raise NotImplementedError("boundary search is implemented for planar systems")
    ctrl = make_controller(prob, filter_name)
    grid = compat.boundary_grid(prob.b, seeds)
    if not grid:
        newton_pts, _ = compat.sample_boundary(prob.b, seeds, seed)
        if not newton_pts:
            return EquilibriumReport(
                interior_candidates=[], boundary_equilibria=[],
                origin_included=prob.b.evaluate((0.0,) * prob.n) > 0,
            )
        # order the samples by angle around their centroid (closed planar curve)
        cx = sum(p[0] for p in newton_pts) / len(newton_pts)
        cy = sum(p[1] for p in newton_pts) / len(newton_pts)
        grid = sorted(newton_pts, key=lambda p: math.atan2(p[1] - cy, p[0] - cx))
    b_fn = prob.b.compile()
    gb = [prob.b.diff(i).compile() for i in range(2)]

    def tangential_flow(x):
        sol = ctrl(x)
        if not sol.feasible:
            return None
        xd = prob.system.xdot(x, sol.u_star)
        g = (gb[0](x), gb[1](x))
        nt = math.hypot(*g)
        if nt < 1e-14:
            return None
        return (-g[1] * xd[0] + g[0] * xd[1]) / nt

    # Two shell levels suffice: the tangential root location is pinned by the
    # coarse sweep, and deeper shells enter the parallel-degenerate sliver
    # where the dual system exceeds double precision.
    shells = (1e-4, 1e-5)
    roots: list[dict] = []
    candidates = None
    for eta in shells:
        if candidates is None:
            pts = [_project_to_level(b_fn, gb, x, eta) for x in grid]
            pts = [p for p in pts if p is not None]
            # sweep the whole shell for sign changes of the tangential flow
            vals = [(p, tangential_flow(p)) for p in pts]
            vals = [(p, v) for p, v in vals if v is not None]
            found = []
            for k in range(len(vals)):
                (pa, va), (pb, vb) = vals[k], vals[(k + 1) % len(vals)]
                if va == 0.0:
                    found.append(pa)
                elif va * vb < 0.0:
                    root = _bisect_on_shell(b_fn, gb, tangential_flow, pa, pb, va, eta)
                    if root is not None:
                        found.append(root)
            candidates = found
        else:
            # refine each candidate on the tighter shell, keeping the previous
            # root when refinement dies in the degenerate layer
            refined = []
            for p in candidates:
                q = _project_to_level(b_fn, gb, p, eta)
                root = _local_shell_root(b_fn, gb, tangential_flow, q, eta) if q else None
                refined.append(root if root is not None else p)
            candidates = refined
        if not candidates:
            break

    for x in candidates or []:
        x = _project_to_level(b_fn, gb, x, 0.0)
        if x is None:
            continue
        u = _boundary_input(prob, x)
        if u is None:
            continue
        xd = prob.system.xdot(x, u)
        resid = math.sqrt(sum(v * v for v in xd))
        if abs(b_fn(x)) > boundary_tol or resid > residual_tol:
            continue
        if any(math.hypot(x[0] - r["x"][0], x[1] - r["x"][1]) < 1e-4 for r in roots):
            continue
        terms = prob.eval_terms(x)
        norm_lgv = math.sqrt(dot(terms.LgV, terms.LgV))
        if norm_lgv > compat.grad_tol(x):
            cls = "clf-direction"
        elif terms.F_b_prime > 1e-12:
            cls = "cbf-direction"
        else:
            cls = "drift"
        roots.append({"x": list(x), "classification": cls, "residual": resid})

    origin = (0.0,) * prob.n
    origin_included = prob.b.evaluate(origin) > 0
    return EquilibriumReport(
        interior_candidates=[], boundary_equilibria=roots,
        origin_included=origin_included,
    )


def _boundary_input(prob: CertificateProblem, x) -> tuple | None:
    """Filter input in the exact-boundary limit, solved over u alone.

    On b = 0 both shaping offsets vanish (alpha(b) = 0 kills the slack's
    leverage, beta(b) gamma = 0 empties the rate term), so the limit
    controller minimizes ||u - pi||^2 subject to the raw boundary rows
    Lfb + Lgb.u >= 0 and LfV + LgV.u <= 0. Solving this directly stays
    well-conditioned where the full (u, s) dual system degenerates
    (parallel rows with b -> 0), and a projection residual of 1e-12 in b
    cannot re-contaminate the offsets.
    """
    from . import smallqp

    terms = prob.eval_terms(x)
    m = prob.m
    G = [[-v for v in terms.Lgb], list(terms.LgV)]
    h = [terms.Lfb, -terms.LfV]
    res = smallqp.solve_qp((1.0,) * m, terms.pi_x, G, h)
    if not res.feasible:
        return None
    return res.z


def _project_to_level(b_fn, gb, x0, level: float, iters: int = 80):
    """Newton projection along grad b onto the level set b = level."""
    x = list(x0)
    tol = max(1e-11, 1e-6 * abs(level))
    for _ in range(iters):
        val = b_fn(x) - level
        if abs(val) <= tol:
            return tuple(x)
        g = [fn(x) for fn in gb]
        g2 = dot(g, g)
        if g2 < 1e-18:
            return None
        x = [xi - val * gi / g2 for xi, gi in zip(x, g)]
    return None


def _bisect_on_shell(b_fn, gb, flow_fn, pa, pb, va, eta, iters: int = 80):
    """Bisect a tangential-flow sign change between two points of one shell."""
    a, b = pa, pb
    for _ in range(iters):
        mid = _project_to_level(b_fn, gb, ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2), eta)
        if mid is None:
            return None
        if math.hypot(a[0] - b[0], a[1] - b[1]) < 1e-13:
            return mid
        vm = flow_fn(mid)
        if vm is None:
            return None
        if vm == 0.0:
            return mid
        if (vm > 0) == (va > 0):
            a = mid
        else:
            b = mid
    return mid


def _local_shell_root(b_fn, gb, flow_fn, p, eta):
    """Re-bracket a root on a tighter shell by stepping tangentially outward."""
    v0 = flow_fn(p)
    if v0 is None:
        return None
    if v0 == 0.0:
        return p
    g = [fn(p) for fn in gb]
    nt = math.hypot(*g)
    if nt < 1e-14:
        return None
    tang = (-g[1] / nt, g[0] / nt)
    step = 1e-6
    for _ in range(40):
        for sgn in (1.0, -1.0):
            q = _project_to_level(
                b_fn, gb, (p[0] + sgn * step * tang[0], p[1] + sgn * step * tang[1]), eta
            )
            if q is None:
                continue
            vq = flow_fn(q)
            if vq is not None and vq * v0 < 0.0:
                if sgn > 0:
                    return _bisect_on_shell(b_fn, gb, flow_fn, p, q, v0, eta)
                return _bisect_on_shell(b_fn, gb, flow_fn, q, p, vq, eta)
        step *= 2.0
        if step > 1.0:
            break
    return None


@dataclass
class RoaReport:
    status: str                 # pass | fail | not-applicable
    level: float
    min_V_on_boundary: float
    trials: int
    failures: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "level": self.level,
            "min_V_on_boundary": self.min_V_on_boundary,
            "trials": self.trials,
            "failures": self.failures,
        }


def roa_certificate(
    prob: CertificateProblem,
    l: float,
    trials: int = 50,
    seed: int = 0,
    filter_name: str = "ours",
    dt: float = 1e-3,
    T: float = 25.0,
    converge_tol: float = 1e-3,
    monotone_tol: float = 1e-9,
    sample_box: tuple[float, float] | None = None,
) -> RoaReport:
    """Sampling certificate that the V-sublevel set at l attracts to the origin.

    Applicable only when the sublevel set misses the barrier boundary
    (min V on boundary samples must exceed l); then all seeded starts must
    reach the origin ball with step-monotone V.
    """
    if l <= 0:
        raise ValueError("level must be positive")
    grid = compat.boundary_grid(prob.b, 360)
    newton_pts, _ = compat.sample_boundary(prob.b, 90, seed)
    boundary = grid + newton_pts
    min_V = min(prob.V.evaluate(x) for x in boundary) if boundary else math.inf
    if min_V <= l:
        return RoaReport(status="not-applicable", level=l, min_V_on_boundary=min_V,
                         trials=0)

    rng = random.Random(seed)
    if sample_box is None:
        r = math.sqrt(l)  # covers quadratic-like V; rejection fixes the rest
        sample_box = (-1.5 * r, 1.5 * r)
    lo, hi = sample_box
    V_fn = prob.V.compile()
    starts = []
    attempts = 0
    while len(starts) < trials and attempts < 1000 * trials:
        attempts += 1
        x = tuple(rng.uniform(lo, hi) for _ in range(prob.n))
        if V_fn(x) <= l:
            starts.append(x)
    if len(starts) < trials:
        return RoaReport(status="fail", level=l, min_V_on_boundary=min_V, trials=0,
                         failures=[{"reason": "sampling", "detail": "level set too small"}])

    failures = []
    for x0 in starts:
        traj = simulate(prob, x0, filter_name=filter_name, dt=dt, T=T,
                        pos_tol=converge_tol)
        if traj.terminal_reason != "converged-to-origin":
            failures.append({"x0": list(x0), "reason": traj.terminal_reason,
                             "terminal": list(traj.terminal_state())})
            continue
        for k in range(len(traj.V_vals) - 1):
            if traj.V_vals[k + 1] > traj.V_vals[k] + monotone_tol:
                failures.append({"x0": list(x0), "reason": "V-increase",
                                 "step": k, "delta": traj.V_vals[k + 1] - traj.V_vals[k]})
                break
    status = "pass" if not failures else "fail"
    return RoaReport(status=status, level=l, min_V_on_boundary=min_V,
                     trials=len(starts), failures=failures)
