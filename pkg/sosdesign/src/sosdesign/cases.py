"""Built-in design cases and the scaling transform into design coordinates."""

from __future__ import annotations

import math

from .poly import Poly, norm_sq
from .programs import DEFAULT_DEGREES, DesignSpec


def polynomial_2d_case() -> dict:
    """Second-order polynomial system with state-dependent input gains,
    a small disc obstacle at (0, 1), and a radius-10 working region."""
    n = 2
    x1, x2 = Poly.var(n, 0), Poly.var(n, 1)
    f = [x2, x1 + x1 * x1 * x1 * (1.0 / 3.0) + x2]
    zero = Poly.zero(n)
    g = [
        [0.2 * (x1 * x1) + 0.2 * x2 + 1.0, zero],
        [zero, -0.2 * (x2 * x2) + 0.2 * x1 + 4.0],
    ]
    s = x1 * x1 + (x2 - 1.0) * (x2 - 1.0) - 0.25
    w = -1.0 * (x1 * x1) - x2 * x2 + 100.0
    eps = norm_sq(n) * 0.1
    return {"f": f, "g": g, "s": s, "w": w, "eps1": eps, "eps2": eps, "scale": 10.0}


def scaled_spec(case: dict, degrees: dict | None = None, max_iters: int = 30,
                sdp_tolerance: float = 1e-7) -> DesignSpec:
    """Map a case into unit-ball design coordinates x = scale * y.

    Degree-10 certificates on a radius-10 ball put twenty orders of magnitude
    between monomials; the SDP only stays conditioned on the unit ball. The
    safe set is renormalized to unit leading size (its scale is absorbed by a
    multiplier); the rate polynomials are transformed exactly, since their
    scale fixes the exported convergence rate.
    """
    r = float(case.get("scale", 1.0))
    n = case["f"][0].n

    def to_y(p: Poly) -> Poly:
        return p.substitute_scale(r)

    f = [to_y(p) * (1.0 / r) for p in case["f"]]
    g = [[to_y(p) * (1.0 / r) for p in row] for row in case["g"]]
    s = to_y(case["s"])
    s = s * (1.0 / max(1.0, s.max_abs_coef()))
    w = to_y(case["w"])
    w = w * (1.0 / max(1.0, w.max_abs_coef()))
    return DesignSpec(
        f=f, g=g, s=s, w=w,
        degrees=dict(degrees or DEFAULT_DEGREES),
        eps1=to_y(case["eps1"]), eps2=to_y(case["eps2"]),
        max_iters=max_iters, sdp_tolerance=sdp_tolerance, scale=r,
    )


def case_from_json(data: dict) -> dict:
    if data.get("case") == "polynomial-2d":
        return polynomial_2d_case()
    return {
        "f": [Poly.from_json(p) for p in data["system"]["f"]],
        "g": [[Poly.from_json(p) for p in row] for row in data["system"]["g"]],
        "s": Poly.from_json(data["safe_set"]),
        "w": Poly.from_json(data["domain"]),
        "eps1": Poly.from_json(data["eps1"]),
        "eps2": Poly.from_json(data["eps2"]),
        "scale": float(data.get("scale", 1.0)),
    }
