"""Artifact export in the filter package's problem-JSON schema, plus a
provenance block carrying the full design-side record."""

from __future__ import annotations

import json

from .design import DesignArtifact
from .programs import DesignSpec
from .poly import Poly


def to_original_coords(p: Poly, scale: float) -> Poly:
    """Map a design-coordinate polynomial q(y) to q(x / scale)."""
    return p.substitute_scale(1.0 / scale)


def build_artifact_json(
    spec: DesignSpec,
    art: DesignArtifact,
    original: dict,
    compatibility: str = "unverified",
    seed: int = 0,
) -> dict:
    """Assemble the handoff JSON.

    `original` carries the unscaled case: {"f": [Poly], "g": [[Poly]],
    "s": Poly, "w": Poly, "eps1": Poly}. The problem block is entirely in
    original coordinates; the provenance block keeps the design-coordinate
    record so the verification program can be re-run bit-for-bit.
    """
    r = art.scale
    b_x = to_original_coords(art.b, r)
    V_x = to_original_coords(art.V, r)
    u_b_x = [to_original_coords(u, r) for u in art.u_b]
    u_V_x = [to_original_coords(u, r) for u in art.u_V]
    gamma = original["eps1"] * 0.5

    problem = {
        "system": {
            "f": [p.to_json() for p in original["f"]],
            "g": [[p.to_json() for p in row] for row in original["g"]],
        },
        "b": b_x.to_json(),
        "V": V_x.to_json(),
        "alpha": {"kind": "linear-gain", "gain": 1.0},
        "beta": {"kind": "scaled-tanh", "gain": 1000.0},
        "gamma": gamma.to_json(),
        "p": 100.0,
        "pi": {"kind": "zero"},
    }
    provenance = {
        "degrees": dict(art.spec_degrees),
        "scale": r,
        "seed": seed,
        "verified": art.verified,
        "verification": _json_safe(art.verification),
        "compatibility_program": compatibility,
        "iteration_log": _json_safe(art.iteration_log),
        "safe_set": original["s"].to_json(),
        "domain": original["w"].to_json(),
        "controllers": {
            "u_b": [p.to_json() for p in u_b_x],
            "u_V": [p.to_json() for p in u_V_x],
        },
        "design_coordinates": {
            "f": [p.to_json() for p in spec.f],
            "g": [[p.to_json() for p in row] for row in spec.g],
            "s": spec.s.to_json(),
            "w": spec.w.to_json(),
            "eps1": spec.eps1.to_json(),
            "eps2": spec.eps2.to_json(),
            "b": art.b.to_json(),
            "V": art.V.to_json(),
            "u_b": [p.to_json() for p in art.u_b],
            "u_V": [p.to_json() for p in art.u_V],
            "multipliers": {k: v.to_json() for k, v in art.multipliers.items()},
        },
    }
    return {"problem": problem, "provenance": provenance}


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            return repr(obj)
        return obj
    if isinstance(obj, (int, str, bool)) or obj is None:
        return obj
    return repr(obj)


def write_artifact(path: str, artifact_json: dict, verified: bool, force: bool) -> None:
    if not verified and not force:
        raise PermissionError(
            "refusing to export an unverified artifact without force"
        )
    with open(path, "w") as fh:
        json.dump(artifact_json, fh, indent=2, sort_keys=True)
        fh.write("\n")
