"""FastAPI service wrapping the filter core.

Every operation is a stateless request/response call; problems travel
inline as JSON (or as the builtin name "benchmark"), so the service holds
no session state and scales horizontally.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, HTTPException

from .. import closed_loop as sim
from .. import experiments
from ..compat import check_relaxed_compatibility
from ..filter_core import closed_form_solve, oracle_solve
from ..problem import CertificateProblem, benchmark_problem, load_problem
from . import schemas

app = FastAPI(
    title="ssfilter",
    description="Safety-and-stability QP filter service",
    version="0.1.0",
)


def resolve_problem(spec) -> CertificateProblem:
    if isinstance(spec, str):
        if spec == "benchmark":
            return benchmark_problem()
        raise HTTPException(status_code=422, detail=f"unknown builtin problem {spec!r}")
    try:
        return load_problem(spec)
    except (KeyError, ValueError, TypeError) as exc:
        raise HTTPException(status_code=422, detail=f"malformed problem JSON: {exc}")


_BIG = 1e308


def _finite(value: float) -> float:
    """Strict JSON cannot carry infinities; clamp them to a huge sentinel."""
    if not math.isfinite(value):
        return math.copysign(_BIG, value)
    return value


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.get("/problems/benchmark")
def get_benchmark() -> dict:
    return benchmark_problem().to_json()


@app.post("/filter-eval", response_model=schemas.FilterEvalResponse)
def filter_eval(req: schemas.FilterEvalRequest):
    prob = resolve_problem(req.problem)
    if len(req.state) != prob.n:
        raise HTTPException(status_code=422, detail=f"state must have dimension {prob.n}")
    terms = prob.eval_terms(req.state)
    pi = tuple(req.pi) if req.pi is not None else None
    out = {}
    if req.path in ("closed", "both"):
        out["closed"] = closed_form_solve(terms, pi_x=pi).to_json()
    if req.path in ("oracle", "both"):
        out["oracle"] = oracle_solve(terms, pi_x=pi).to_json()
    for sol in out.values():
        sol["objective"] = _finite(sol["objective"])
        sol["kkt_residual"] = _finite(sol["kkt_residual"])
    return out


@app.post("/compat-check", response_model=schemas.CompatReportModel)
def compat_check(req: schemas.CompatCheckRequest):
    prob = resolve_problem(req.problem)
    report = check_relaxed_compatibility(prob, count=req.samples, seed=req.seed,
                                         mode=req.mode)
    data = report.to_json()
    data["min_margin"] = _finite(data["min_margin"])
    for s in data["samples"]:
        s["margin"] = _finite(s["margin"])
    return data


@app.post("/simulate", response_model=schemas.TrajectoryModel)
def simulate_endpoint(req: schemas.SimulateRequest):
    prob = resolve_problem(req.problem)
    if len(req.x0) != prob.n:
        raise HTTPException(status_code=422, detail=f"x0 must have dimension {prob.n}")
    if req.filter not in sim.FILTER_NAMES:
        raise HTTPException(status_code=422,
                            detail=f"unknown filter {req.filter!r}; expected {sim.FILTER_NAMES}")
    traj = sim.simulate(prob, req.x0, filter_name=req.filter, dt=req.dt, T=req.T,
                        pos_tol=req.pos_tol, vel_tol=req.vel_tol)
    return traj.to_json()


@app.post("/equilibria", response_model=schemas.EquilibriumReportModel)
def equilibria(req: schemas.EquilibriaRequest):
    prob = resolve_problem(req.problem)
    report = sim.find_boundary_equilibria(prob, filter_name=req.filter,
                                          seeds=req.boundary_seeds, seed=req.seed)
    if req.include_interior:
        report.interior_candidates = sim.scan_interior_equilibria(
            prob, filter_name=req.filter, box=req.interior_box,
            resolution=req.interior_resolution,
        )
    return report.to_json()


@app.post("/mc-compare", response_model=schemas.McComparisonModel)
def mc_compare(req: schemas.McCompareRequest):
    prob = resolve_problem(req.problem)
    result = experiments.run_mc_comparison(seed=req.seed, prob=prob, count=req.count,
                                           box=req.box)
    return result.to_json()


@app.post("/poly-suite", response_model=schemas.PolySuiteResponse)
def poly_suite(req: schemas.PolySuiteRequest):
    try:
        result = experiments.run_polynomial_suite(
            req.artifact,
            starts=[tuple(s) for s in req.starts] if req.starts else experiments.POLY_SUITE_STARTS,
            box=req.box, grid_resolution=req.grid_resolution, dt=req.dt, T=req.T,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    checks = result["checks"]
    if checks["inward_flow_min"] is None:
        checks["inward_flow_min"] = 0.0
    return result


@app.post("/benchmark-suite")
def benchmark_suite(req: schemas.BenchmarkSuiteRequest):
    import tempfile

    prob = resolve_problem(req.problem)
    with tempfile.TemporaryDirectory() as tmp:
        summary = experiments.run_benchmark_suite(
            tmp, prob=prob, filters=tuple(req.filters), dt=req.dt, T=req.T,
        )
    summary.pop("files", None)
    return {"summary": summary}
