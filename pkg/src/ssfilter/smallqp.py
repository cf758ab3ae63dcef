"""Tiny dense QP solver: exact active-set enumeration for few constraints.

Solves min 1/2 z'Hz + q'z subject to G z <= h by enumerating subsets of the
(at most a handful of) inequality constraints as the active set, smallest
first. Each candidate comes from the equality-constrained KKT system; the
first candidate that is primal feasible with non-negative duals is a KKT
point and hence the global optimum of the strictly convex program.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
_SINGULAR_RESIDUAL = 1e-7


def solve_linear(a: list[list[float]], b: list[float]) -> list[float] | None:
    """Gaussian elimination with partial pivoting; None if (near-)singular."""
    n = len(b)
    M = [row[:] + [b[i]] for i, row in enumerate(a)]
    scale = max((abs(v) for row in a for v in row), default=0.0)
    if scale == 0.0:
        return None
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(M[r][col]))
        if abs(M[piv][col]) <= 1e-13 * scale:
            return None
        if piv != col:
            M[col], M[piv] = M[piv], M[col]
        inv = 1.0 / M[col][col]
        for r in range(col + 1, n):
            factor = M[r][col] * inv
            if factor:
                for c in range(col, n + 1):
                    M[r][c] -= factor * M[col][c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        s = M[r][n]
        for c in range(r + 1, n):
            s -= M[r][c] * x[c]
        x[r] = s / M[r][r]
    return x


def solve_min_norm(a: list[list[float]], b: list[float]) -> list[float] | None:
    """Least-squares minimum-norm solution; None when inconsistent."""
    A = np.asarray(a, dtype=float)
    rhs = np.asarray(b, dtype=float)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    resid = A @ sol - rhs
    scale = 1.0 + float(np.max(np.abs(rhs))) + float(np.max(np.abs(A)))
    if float(np.max(np.abs(resid))) > _SINGULAR_RESIDUAL * scale:
        return None
    return [float(v) for v in sol]


@dataclass
class QPResult:
    z: tuple
    multipliers: tuple          # one per inequality constraint, 0 for inactive
    active: tuple               # indices of the winning active set
    objective: float
    feasible: bool


_SUBSETS_1 = ((), (0,))
_SUBSETS_2 = ((), (0,), (1,), (0, 1))


def solve_qp(
    h_diag: Sequence[float],
    z0: Sequence[float],
    G: Sequence[Sequence[float]],
    h: Sequence[float],
) -> QPResult:
    """Minimize 1/2 (z-z0)' diag(h_diag) (z-z0) subject to G z <= h.

    h_diag must be strictly positive. Stated with the unconstrained optimum
    z0 so objectives stay well-scaled. Returns feasible=False when no active
    set yields a primal-feasible, dual-feasible candidate.
    """
    k = len(z0)
    nc = len(G)
    Ginv = [[row[j] / h_diag[j] for j in range(k)] for row in G]  # G H^-1 rows
    r0 = []
    for i in range(nc):
        gi = G[i]
        s = 0.0
        for j in range(k):
            s += gi[j] * z0[j]
        r0.append(h[i] - s)

    if nc == 1:
        subsets = _SUBSETS_1
    elif nc == 2:
        subsets = _SUBSETS_2
    else:
        subsets = [c for size in range(nc + 1) for c in combinations(range(nc), size)]

    for active in subsets:
        cand = _candidate(h_diag, z0, G, h, Ginv, r0, active, k, nc)
        if cand is not None:
            return cand
    return QPResult(
        z=tuple(z0), multipliers=(0.0,) * nc, active=(), objective=math.inf,
        feasible=False,
    )


def _candidate(h_diag, z0, G, h, Ginv, r0, active, k, nc) -> QPResult | None:
    if not active:
        z = tuple(z0)
        mult = [0.0] * nc
    else:
        # mu solves (G_A H^-1 G_A') mu = -r0_A ; z = z0 - H^-1 G_A' mu
        na = len(active)
        if na == 1:
            i = active[0]
            s00 = 0.0
            gi, gvi = G[i], Ginv[i]
            for j in range(k):
                s00 += gvi[j] * gi[j]
            if s00 <= 1e-300:
                # zero constraint row: consistent as an equality only if r0 = 0
                if abs(r0[i]) > _SINGULAR_RESIDUAL * (1.0 + abs(h[i])):
                    return None
                mu = [0.0]
            else:
                mu = [-r0[i] / s00]
        elif na == 2:
            i0, i1 = active
            g0, g1, gv0, gv1 = G[i0], G[i1], Ginv[i0], Ginv[i1]
            s00 = s01 = s11 = 0.0
            for j in range(k):
                s00 += gv0[j] * g0[j]
                s01 += gv0[j] * g1[j]
                s11 += gv1[j] * g1[j]
            det = s00 * s11 - s01 * s01
            if abs(det) > 1e-13 * (1.0 + s00 * s11 + s01 * s01):
                mu = [
                    (-r0[i0] * s11 + r0[i1] * s01) / det,
                    (-r0[i1] * s00 + r0[i0] * s01) / det,
                ]
            else:
                mu = solve_min_norm([[s00, s01], [s01, s11]], [-r0[i0], -r0[i1]])
                if mu is None:
                    return None
        else:
            S = [
                [sum(Ginv[i][j] * G[l][j] for j in range(k)) for l in active]
                for i in active
            ]
            rhs = [-r0[i] for i in active]
            mu = solve_linear(S, rhs) or solve_min_norm(S, rhs)
            if mu is None:
                return None
        # dual feasibility first (cheap reject)
        for m in mu:
            if m < -DUAL_TOL * (1.0 + abs(m)):
                return None
        z = list(z0)
        for idx, i in enumerate(active):
            mi = mu[idx]
            gvi = Ginv[i]
            for j in range(k):
                z[j] -= gvi[j] * mi
        z = tuple(z)
        mult = [0.0] * nc
        for idx, i in enumerate(active):
            mult[i] = mu[idx]
        # the active constraints must actually hold with equality
        for i in active:
            gz = 0.0
            gi = G[i]
            for j in range(k):
                gz += gi[j] * z[j]
            if abs(gz - h[i]) > 1e-7 * (1.0 + abs(h[i])):
                return None
    # primal feasibility of everything
    for i in range(nc):
        gz = 0.0
        gi = G[i]
        for j in range(k):
            gz += gi[j] * z[j]
        if gz - h[i] > FEAS_TOL * (1.0 + abs(h[i])):
            return None
    obj = 0.0
    for j in range(k):
        d = z[j] - z0[j]
        obj += h_diag[j] * d * d
    return QPResult(
        z=z, multipliers=tuple(0.0 if m < 0.0 else m for m in mult),
        active=tuple(active), objective=0.5 * obj, feasible=True,
    )
