"""End-to-end benchmark reproduction: trajectory comparison across filters,
near-origin behaviour, Monte-Carlo cost comparison, and the polynomial-system
phase-portrait suite.

Initial-point sets are reconstructions read off the reference figures; the
assertions downstream use convergence classes, never exact paths.
"""

from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass

from .baselines import BaselineKind, baseline_solve
from .filter_core import closed_form_solve
from .poly import dot
from .problem import CertificateProblem, benchmark_problem, load_problem
from .closed_loop import Trajectory, make_controller, simulate

# Reconstructed initial-point sets (documented defaults, configurable).
FIG1_TOP_POINT = (0.0, 7.0)
FIG1_OTHER_POINTS = (
    (2.0, 6.0), (-2.0, 6.0), (3.0, 4.0), (-3.0, 4.0), (2.0, -3.0), (-3.0, -2.0),
)
NEAR_ORIGIN_POINTS = (
    (0.3, 0.2), (-0.25, 0.25), (0.2, -0.3), (-0.2, -0.2), (0.25, 0.15), (-0.3, 0.1),
)
POLY_SUITE_STARTS = ((1.5, 2.0), (-1.5, 2.0))

COMPARISON_FILTERS = ("ours", "ames", "tan", "mestres")


def _fmt(v) -> str:
    return repr(float(v))


def write_trajectory_csv(traj: Trajectory, path: str) -> None:
    """Columns: t, x1..xn, u1..um, s, b, V, Vdot, region_label."""
    n = len(traj.states[0])
    m = len(traj.inputs[0])
    header = (
        ["t"] + [f"x{i+1}" for i in range(n)] + [f"u{j+1}" for j in range(m)]
        + ["s", "b", "V", "Vdot", "region_label"]
    )
    lines = [",".join(header)]
    for k in range(len(traj.times)):
        row = (
            [_fmt(traj.times[k])]
            + [_fmt(v) for v in traj.states[k]]
            + [_fmt(v) for v in traj.inputs[k]]
            + [_fmt(traj.s_vals[k]), _fmt(traj.b_vals[k]), _fmt(traj.V_vals[k]),
               _fmt(traj.Vdot_vals[k]), traj.regions[k]]
        )
        lines.append(",".join(row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def dump_json(data, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_benchmark_suite(
    outdir: str,
    prob: CertificateProblem | None = None,
    filters=COMPARISON_FILTERS,
    initial_points=None,
    near_origin_points=NEAR_ORIGIN_POINTS,
    dt: float = 1e-3,
    T: float = 20.0,
) -> dict:
    """Simulate every filter from the figure-1 style initial set plus the
    near-origin set; write per-filter trajectory CSVs and a summary JSON."""
    prob = prob or benchmark_problem()
    if initial_points is None:
        initial_points = (FIG1_TOP_POINT,) + FIG1_OTHER_POINTS
    os.makedirs(outdir, exist_ok=True)
    summary = {"filters": {}, "dt": dt, "T": T}
    files = []
    for name in filters:
        entries = []
        for tag, points in (("main", initial_points), ("near-origin", near_origin_points)):
            for idx, x0 in enumerate(points):
                traj = simulate(prob, x0, filter_name=name, dt=dt, T=T)
                fname = f"{name}_{tag}_{idx}.csv"
                write_trajectory_csv(traj, os.path.join(outdir, fname))
                files.append(fname)
                term = traj.terminal_state()
                entries.append({
                    "x0": list(x0),
                    "set": tag,
                    "file": fname,
                    "terminal_state": [float(v) for v in term],
                    "terminal_norm": math.sqrt(sum(v * v for v in term)),
                    "terminal_reason": traj.terminal_reason,
                    "min_b": traj.min_b(),
                })
        summary["filters"][name] = entries
    dump_json(summary, os.path.join(outdir, "summary.json"))
    files.append("summary.json")
    summary["files"] = files
    return summary


@dataclass
class McComparison:
    seed: int
    states: list[tuple]
    costs: dict            # filter name -> list of ||u||^2
    log_ratios: dict       # competitor name -> list of log(cost_o / cost_ours)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "states": [list(s) for s in self.states],
            "costs": self.costs,
            "log_ratios": self.log_ratios,
        }


def sample_states_in_safe_set(
    prob: CertificateProblem, count: int, seed: int,
    box: tuple[float, float] = (-8.0, 8.0),
) -> list[tuple]:
    """Rejection-sample `count` states uniformly from the box intersected with
    the barrier's non-negative region."""
    rng = random.Random(seed)
    b_fn = prob.b.compile()
    lo, hi = box
    out = []
    while len(out) < count:
        x = tuple(rng.uniform(lo, hi) for _ in range(prob.n))
        if b_fn(x) >= 0.0:
            out.append(x)
    return out


def run_mc_comparison(
    seed: int = 0,
    prob: CertificateProblem | None = None,
    count: int = 100,
    box: tuple[float, float] = (-8.0, 8.0),
    filters=COMPARISON_FILTERS,
) -> McComparison:
    """Pointwise optimal-cost comparison over seeded random safe states."""
    prob = prob or benchmark_problem()
    states = sample_states_in_safe_set(prob, count, seed, box)
    b_fn = prob.b.compile()
    kinds = {
        "ames": BaselineKind("slack-clf-qp"),
        "tan": BaselineKind("slack-clf-qp-with-stabilizing-pi"),
        "mestres": BaselineKind("penalty-lifted-clf"),
    }
    costs = {name: [] for name in filters}
    for x in states:
        assert b_fn(x) >= 0.0, "sampled state left the safe set"
        terms = prob.eval_terms(x)
        for name in filters:
            if name == "ours":
                sol = closed_form_solve(terms)
            else:
                sol = baseline_solve(kinds[name], terms)
            costs[name].append(dot(sol.u_star, sol.u_star))
    log_ratios = {}
    for name in filters:
        if name == "ours":
            continue
        log_ratios[name] = [
            math.log(c_o / c_u) if c_u > 0 and c_o > 0 else 0.0
            for c_o, c_u in zip(costs[name], costs["ours"])
        ]
    return McComparison(seed=seed, states=states, costs=costs, log_ratios=log_ratios)


def extract_boundary_polyline(
    prob: CertificateProblem, box: tuple[float, float], resolution: int = 241,
) -> list[list[tuple]]:
    """Marching-squares polylines of the barrier zero level set inside the box."""
    import numpy as np
    from skimage import measure

    lo, hi = box
    xs = np.linspace(lo, hi, resolution)
    ys = np.linspace(lo, hi, resolution)
    b_fn = prob.b.compile()
    grid = np.array([[b_fn((x, y)) for y in ys] for x in xs])
    contours = measure.find_contours(grid, 0.0)
    scale = (hi - lo) / (resolution - 1)
    out = []
    for c in contours:
        out.append([(lo + p[0] * scale, lo + p[1] * scale) for p in c])
    return out


def run_polynomial_suite(
    artifact_path_or_data,
    outdir: str | None = None,
    starts=POLY_SUITE_STARTS,
    box: tuple[float, float] = (-3.0, 3.0),
    grid_resolution: int = 41,
    dt: float = 1e-3,
    T: float = 30.0,
    inward_flow_tol: float = 1e-6,
) -> dict:
    """Phase-portrait data and invariance checks for a designed problem.

    Emits the closed-loop vector field on a mesh, the barrier boundary
    polyline, trajectories from the start rectangle, and three checks:
    the origin lies strictly inside the invariant set, the invariant set
    excludes the obstacle, and the flow points inward along the boundary.
    """
    if isinstance(artifact_path_or_data, (str, os.PathLike)):
        with open(artifact_path_or_data) as fh:
            artifact = json.load(fh)
    else:
        artifact = artifact_path_or_data
    _validate_artifact(artifact)
    prob = load_problem(artifact)
    safe_set = None
    prov = artifact.get("provenance", {})
    if "safe_set" in prov:
        from .poly import Polynomial

        safe_set = Polynomial.from_json(prov["safe_set"])

    ctrl = make_controller(prob, "ours")
    b_fn = prob.b.compile()
    gb = [prob.b.diff(i).compile() for i in range(prob.n)]
    lo, hi = box

    # Closed-loop vector field on the mesh.
    field_rows = []
    steps = grid_resolution - 1
    for i in range(grid_resolution):
        for j in range(grid_resolution):
            x = (lo + i * (hi - lo) / steps, lo + j * (hi - lo) / steps)
            sol = ctrl(x)
            if not sol.feasible:
                field_rows.append((x, None))
                continue
            xd = prob.system.xdot(x, sol.u_star)
            field_rows.append((x, xd))

    # Boundary polyline + inward-flow check.
    polylines = extract_boundary_polyline(prob, box)
    inward = []
    min_inward = math.inf
    for line in polylines:
        for x in line:
            sol = ctrl(x)
            if not sol.feasible:
                continue
            xd = prob.system.xdot(x, sol.u_star)
            val = dot([g(x) for g in gb], xd)
            inward.append((x, val))
            min_inward = min(min_inward, val)

    trajectories = [
        simulate(prob, x0, filter_name="ours", dt=dt, T=T) for x0 in starts
    ]

    # Obstacle exclusion: wherever the safe-set polynomial is negative the
    # barrier must be negative too.
    exclusion_ok = True
    exclusion_worst = -math.inf
    if safe_set is not None:
        s_fn = safe_set.compile()
        for i in range(grid_resolution):
            for j in range(grid_resolution):
                x = (lo + i * (hi - lo) / steps, lo + j * (hi - lo) / steps)
                if s_fn(x) < 0 and b_fn(x) >= 0:
                    exclusion_ok = False
                    exclusion_worst = max(exclusion_worst, b_fn(x))

    checks = {
        "b_at_origin": b_fn((0.0,) * prob.n),
        "origin_inside": b_fn((0.0,) * prob.n) > 0,
        "inward_flow_min": None if math.isinf(min_inward) else min_inward,
        "inward_flow_ok": (not math.isinf(min_inward)) and min_inward >= -inward_flow_tol,
        "obstacle_excluded": exclusion_ok,
        "trajectories": [
            {
                "x0": list(t.states[0]),
                "terminal_reason": t.terminal_reason,
                "terminal_norm": math.sqrt(sum(v * v for v in t.terminal_state())),
                "min_b": t.min_b(),
            }
            for t in trajectories
        ],
    }
    result = {
        "checks": checks,
        "vector_field": [
            {"x": list(x), "xdot": list(xd) if xd else None} for x, xd in field_rows
        ],
        "boundary": [[list(p) for p in line] for line in polylines],
        "trajectories": [t.to_json() for t in trajectories],
    }

    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        dump_json(checks, os.path.join(outdir, "checks.json"))
        with open(os.path.join(outdir, "vector_field.csv"), "w") as fh:
            fh.write("x1,x2,xdot1,xdot2\n")
            for x, xd in field_rows:
                if xd is None:
                    continue
                fh.write(",".join(map(_fmt, (*x, *xd))) + "\n")
        with open(os.path.join(outdir, "boundary.csv"), "w") as fh:
            fh.write("polyline,x1,x2\n")
            for k, line in enumerate(polylines):
                for p in line:
                    fh.write(f"{k},{_fmt(p[0])},{_fmt(p[1])}\n")
        for k, traj in enumerate(trajectories):
            write_trajectory_csv(traj, os.path.join(outdir, f"trajectory_{k}.csv"))
    return result


def _validate_artifact(artifact: dict) -> None:
    data = artifact.get("problem", artifact)
    missing = [k for k in ("system", "b", "V", "alpha", "beta", "gamma", "p") if k not in data]
    if missing:
        raise ValueError(
            "malformed problem/artifact: missing keys "
            + ", ".join(missing)
            + "; expected the problem JSON schema (see README)"
        )
