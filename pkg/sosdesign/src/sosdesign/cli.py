"""Designer CLI: synthesize and verify compatible certificate pairs."""

from __future__ import annotations

import json
import sys

import click

from .cases import case_from_json, scaled_spec
from .design import run_algorithm
from .export import build_artifact_json, write_artifact
from .poly import Poly
from .programs import verify_compatibility


@click.group()
def main():
    """Sum-of-squares certificate synthesis."""


@main.command()
@click.option("--spec", "spec_path", required=True, help="Design spec JSON (or builtin case).")
@click.option("--out", "out_path", required=True)
@click.option("--max-iters", default=30, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--force", is_flag=True, help="Export even if verification failed.")
def design(spec_path, out_path, max_iters, seed, force):
    """Run the alternating synthesis and export a handoff artifact."""
    with open(spec_path) as fh:
        data = json.load(fh)
    case = case_from_json(data)
    spec = scaled_spec(case, degrees=data.get("degrees"), max_iters=max_iters)
    art = run_algorithm(spec)
    if not art.success:
        click.echo(json.dumps({"success": False, "log": art.iteration_log[-4:]},
                              default=repr, indent=2))
        sys.exit(2)
    compat, _, _ = verify_compatibility(spec.f, spec.g, art.b, art.V,
                                        deg_u=spec.degrees["u_b"])
    payload = build_artifact_json(spec, art, case, compatibility=compat, seed=seed)
    try:
        write_artifact(out_path, payload, art.verified, force)
    except PermissionError as exc:
        click.echo(str(exc), err=True)
        sys.exit(2)
    click.echo(json.dumps({
        "success": True, "verified": art.verified, "compatibility": compat,
        "iterations": sum(1 for e in art.iteration_log if e.get("stage") == "A"),
        "out": out_path,
    }, indent=2))


@main.command()
@click.option("--problem", "artifact_path", required=True, help="Artifact JSON.")
def verify(artifact_path):
    """Re-run the compatibility verification program on an artifact."""
    with open(artifact_path) as fh:
        data = json.load(fh)
    design_block = data["provenance"]["design_coordinates"]
    f = [Poly.from_json(p) for p in design_block["f"]]
    g = [[Poly.from_json(p) for p in row] for row in design_block["g"]]
    b = Poly.from_json(design_block["b"])
    V = Poly.from_json(design_block["V"])
    deg_u = int(data["provenance"]["degrees"]["u_b"])
    result, mults, stats = verify_compatibility(f, g, b, V, deg_u=deg_u)
    click.echo(json.dumps({
        "compatibility": result,
        "status": stats.status,
        "solve_time": stats.solve_time,
    }, indent=2))
    if result != "true":
        sys.exit(2)


if __name__ == "__main__":
    main()
