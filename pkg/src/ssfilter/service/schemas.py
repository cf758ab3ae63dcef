"""Pydantic request/response models for the filter service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field

ProblemSpec = str | dict[str, Any]   # builtin name ("benchmark") or problem/artifact JSON


class FilterEvalRequest(BaseModel):
    problem: ProblemSpec = "benchmark"
    state: list[float]
    pi: list[float] | None = None
    path: Literal["closed", "oracle", "both"] = "closed"


class FilterSolutionModel(BaseModel):
    u: list[float]
    s: float
    lambda1: float | None
    lambda2: float | None
    region: str
    region_index: int
    path: str
    kkt_residual: float
    objective: float
    feasible: bool


class FilterEvalResponse(BaseModel):
    closed: FilterSolutionModel | None = None
    oracle: FilterSolutionModel | None = None


class CompatCheckRequest(BaseModel):
    problem: ProblemSpec = "benchmark"
    samples: int = Field(default=360, ge=1)
    seed: int = 0
    mode: Literal["relaxed", "strict"] = "relaxed"


class BoundarySampleModel(BaseModel):
    x: list[float]
    feasible: bool
    witness_u: list[float] | None
    conflict_kind: str | None
    margin: float


class CompatReportModel(BaseModel):
    samples: list[BoundarySampleModel]
    all_feasible: bool
    min_margin: float
    skipped_seeds: int
    mode: str


class SimulateRequest(BaseModel):
    problem: ProblemSpec = "benchmark"
    x0: list[float]
    filter: str = "ours"
    dt: float = Field(default=1e-3, gt=0)
    T: float = Field(default=20.0, gt=0)
    pos_tol: float = 1e-4
    vel_tol: float = 1e-6


class TrajectoryModel(BaseModel):
    times: list[float]
    states: list[list[float]]
    inputs: list[list[float]]
    s_vals: list[float]
    b_vals: list[float]
    V_vals: list[float]
    Vdot_vals: list[float]
    regions: list[str]
    terminal_reason: str
    infeasible_state: list[float] | None
    filter_name: str


class EquilibriaRequest(BaseModel):
    problem: ProblemSpec = "benchmark"
    filter: str = "ours"
    interior_box: tuple[float, float] = (-8.0, 8.0)
    interior_resolution: float = 0.05
    boundary_seeds: int = 72
    seed: int = 0
    include_interior: bool = True


class EquilibriumReportModel(BaseModel):
    interior_candidates: list[dict]
    boundary_equilibria: list[dict]
    origin_included: bool


class McCompareRequest(BaseModel):
    problem: ProblemSpec = "benchmark"
    seed: int = 0
    count: int = Field(default=100, ge=1)
    box: tuple[float, float] = (-8.0, 8.0)


class McComparisonModel(BaseModel):
    seed: int
    states: list[list[float]]
    costs: dict[str, list[float]]
    log_ratios: dict[str, list[float]]


class PolySuiteRequest(BaseModel):
    artifact: dict[str, Any]
    starts: list[list[float]] | None = None
    box: tuple[float, float] = (-3.0, 3.0)
    grid_resolution: int = Field(default=41, ge=5)
    dt: float = 1e-3
    T: float = 30.0


class PolySuiteResponse(BaseModel):
    checks: dict[str, Any]
    vector_field: list[dict]
    boundary: list[list[list[float]]]
    trajectories: list[TrajectoryModel]


class BenchmarkSuiteRequest(BaseModel):
    problem: ProblemSpec = "benchmark"
    filters: list[str] = ["ours", "ames", "tan", "mestres"]
    dt: float = 1e-3
    T: float = 20.0


class ErrorModel(BaseModel):
    detail: str
