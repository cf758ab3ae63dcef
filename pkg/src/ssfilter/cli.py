"""Thin-client CLI over the filter service.

Every subcommand builds a request, posts it to the service (in-process ASGI
transport by default, a remote base URL with --server), and materializes the
response as files or stdout JSON.

Exit codes: 0 success, 2 acceptance-style check failed, 1 error.
"""

from __future__ import annotations

import json
import sys

import click
import httpx

CHECK_FAILED = 2


def make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    # in-process: drive the ASGI app directly through a sync test transport
    from starlette.testclient import TestClient

    from .service.app import app

    return TestClient(app)


def load_problem_arg(problem: str):
    if problem == "benchmark":
        return "benchmark"
    with open(problem) as fh:
        return json.load(fh)


def post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise click.ClickException(f"{path} failed ({resp.status_code}): {detail}")
    return resp.json()


def emit(data: dict, out: str | None) -> None:
    text = json.dumps(data, indent=2, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


@click.group()
@click.option("--server", default=None, help="Remote service base URL (default: in-process).")
@click.pass_context
def main(ctx, server):
    """Safety-and-stability filter toolkit (thin client)."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command("filter-eval")
@click.option("--problem", default="benchmark", help="Problem JSON file or 'benchmark'.")
@click.option("--state", required=True, help="Comma-separated state, e.g. 0,2")
@click.option("--pi", default=None, help="Comma-separated nominal input override.")
@click.option("--path", "solve_path", type=click.Choice(["closed", "oracle", "both"]),
              default="closed")
@click.option("--out", default=None, help="Write the JSON result to a file.")
@click.pass_context
def filter_eval(ctx, problem, state, pi, solve_path, out):
    """Solve the filter QP at one state."""
    with make_client(ctx.obj["server"]) as client:
        payload = {
            "problem": load_problem_arg(problem),
            "state": [float(v) for v in state.split(",")],
            "path": solve_path,
        }
        if pi is not None:
            payload["pi"] = [float(v) for v in pi.split(",")]
        data = post(client, "/filter-eval", payload)
    emit(data, out)
    for sol in data.values():
        if sol is not None and not sol["feasible"]:
            sys.exit(CHECK_FAILED)


@main.command("compat-check")
@click.option("--problem", default="benchmark")
@click.option("--samples", default=360, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--mode", type=click.Choice(["relaxed", "strict"]), default="relaxed")
@click.option("--out", default=None)
@click.pass_context
def compat_check(ctx, problem, samples, seed, mode, out):
    """Check (relaxed) compatibility on boundary samples."""
    with make_client(ctx.obj["server"]) as client:
        data = post(client, "/compat-check", {
            "problem": load_problem_arg(problem),
            "samples": samples, "seed": seed, "mode": mode,
        })
    summary = {k: data[k] for k in ("all_feasible", "min_margin", "skipped_seeds", "mode")}
    summary["num_samples"] = len(data["samples"])
    emit(data if out else summary, out)
    if out:
        click.echo(json.dumps(summary, indent=2, sort_keys=True))
    if not data["all_feasible"]:
        sys.exit(CHECK_FAILED)


@main.command("simulate")
@click.option("--problem", default="benchmark")
@click.option("--x0", required=True, help="Comma-separated initial state.")
@click.option("--filter", "filter_name",
              type=click.Choice(["ours", "ours-oracle", "ames", "tan", "mestres"]),
              default="ours")
@click.option("--dt", default=1e-3, type=float)
@click.option("--T", "horizon", default=20.0, type=float)
@click.option("--out", default=None, help="Trajectory CSV path.")
@click.pass_context
def simulate_cmd(ctx, problem, x0, filter_name, dt, horizon, out):
    """Simulate the closed loop and write a trajectory CSV."""
    with make_client(ctx.obj["server"]) as client:
        data = post(client, "/simulate", {
            "problem": load_problem_arg(problem),
            "x0": [float(v) for v in x0.split(",")],
            "filter": filter_name, "dt": dt, "T": horizon,
        })
    from .closed_loop import Trajectory

    traj = Trajectory(
        times=data["times"], states=[tuple(s) for s in data["states"]],
        inputs=[tuple(u) for u in data["inputs"]], s_vals=data["s_vals"],
        b_vals=data["b_vals"], V_vals=data["V_vals"], Vdot_vals=data["Vdot_vals"],
        regions=data["regions"], terminal_reason=data["terminal_reason"],
        infeasible_state=data["infeasible_state"], filter_name=data["filter_name"],
    )
    if out:
        from .experiments import write_trajectory_csv

        write_trajectory_csv(traj, out)
    click.echo(json.dumps({
        "terminal_reason": traj.terminal_reason,
        "terminal_state": list(traj.terminal_state()),
        "min_b": traj.min_b(),
        "steps": len(traj.times),
    }, indent=2, sort_keys=True))
    if traj.terminal_reason == "solver-infeasible":
        sys.exit(CHECK_FAILED)


@main.command("equilibria")
@click.option("--problem", default="benchmark")
@click.option("--filter", "filter_name", default="ours")
@click.option("--interior/--no-interior", default=True)
@click.option("--resolution", default=0.05, type=float)
@click.option("--seed", default=0, type=int)
@click.option("--out", default=None)
@click.pass_context
def equilibria(ctx, problem, filter_name, interior, resolution, seed, out):
    """Locate and classify closed-loop equilibria."""
    with make_client(ctx.obj["server"]) as client:
        data = post(client, "/equilibria", {
            "problem": load_problem_arg(problem),
            "filter": filter_name,
            "include_interior": interior,
            "interior_resolution": resolution,
            "seed": seed,
        })
    emit(data, out)


@main.command("mc-compare")
@click.option("--problem", default="benchmark")
@click.option("--seed", default=0, type=int)
@click.option("--count", default=100, type=int)
@click.option("--out", default=None)
@click.pass_context
def mc_compare(ctx, problem, seed, count, out):
    """Monte-Carlo pointwise cost comparison across filters."""
    with make_client(ctx.obj["server"]) as client:
        data = post(client, "/mc-compare", {
            "problem": load_problem_arg(problem), "seed": seed, "count": count,
        })
    emit(data, out)


@main.command("poly-suite")
@click.option("--problem", "artifact", required=True,
              help="Design artifact (or problem) JSON file.")
@click.option("--out", "outdir", default=None, help="Directory for CSV/JSON outputs.")
@click.option("--grid", default=41, type=int)
@click.option("--box", default=3.0, type=float, help="Half-width of the evaluation box.")
@click.pass_context
def poly_suite(ctx, artifact, outdir, grid, box):
    """Phase-portrait suite and invariance checks for a designed problem."""
    with open(artifact) as fh:
        artifact_data = json.load(fh)
    with make_client(ctx.obj["server"]) as client:
        data = post(client, "/poly-suite", {
            "artifact": artifact_data, "grid_resolution": grid, "box": (-box, box),
        })
    checks = data["checks"]
    if outdir:
        import os

        from .experiments import dump_json

        os.makedirs(outdir, exist_ok=True)
        dump_json(checks, os.path.join(outdir, "checks.json"))
        with open(os.path.join(outdir, "vector_field.csv"), "w") as fh:
            fh.write("x1,x2,xdot1,xdot2\n")
            for row in data["vector_field"]:
                if row["xdot"] is None:
                    continue
                fh.write(",".join(repr(float(v)) for v in (*row["x"], *row["xdot"])) + "\n")
        with open(os.path.join(outdir, "boundary.csv"), "w") as fh:
            fh.write("polyline,x1,x2\n")
            for k, line in enumerate(data["boundary"]):
                for p in line:
                    fh.write(f"{k},{float(p[0])!r},{float(p[1])!r}\n")
    click.echo(json.dumps(checks, indent=2, sort_keys=True))
    ok = (
        checks["origin_inside"]
        and checks["obstacle_excluded"]
        and checks["inward_flow_ok"]
        and all(t["terminal_reason"] != "solver-infeasible" for t in checks["trajectories"])
    )
    if not ok:
        sys.exit(CHECK_FAILED)


@main.command("benchmark-suite")
@click.option("--out", "outdir", required=True, help="Output directory.")
@click.option("--dt", default=1e-3, type=float)
@click.option("--T", "horizon", default=20.0, type=float)
@click.option("--filters", default="ours,ames,tan,mestres")
@click.pass_context
def benchmark_suite(ctx, outdir, dt, horizon, filters):
    """Reproduce the trajectory-comparison experiment (writes CSVs + summary)."""
    from .experiments import run_benchmark_suite

    summary = run_benchmark_suite(outdir, filters=tuple(filters.split(",")),
                                  dt=dt, T=horizon)
    counts = {
        name: sum(1 for e in entries if e["terminal_reason"] != "solver-infeasible")
        for name, entries in summary["filters"].items()
    }
    click.echo(json.dumps({"trajectories": counts, "outdir": outdir},
                          indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
