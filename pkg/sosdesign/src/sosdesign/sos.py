"""Vectorized SOS program assembly.

Polynomial-valued affine expressions are kept as sparse linear maps from
named decision blocks to coefficient rows, so each membership constraint
compiles to one sparse-matrix equality instead of thousands of scalar nodes.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .poly import Poly, monomials_upto


class Block:
    """A named decision block: a flat cvxpy vector or a PSD Gram matrix."""

    def __init__(self, name: str, var, shape_kind: str, basis=None, z=None):
        self.name = name
        self.var = var
        self.kind = shape_kind          # "vector" or "gram"
        self.basis = basis              # monomials for vector blocks
        self.z = z                      # Gram monomial vector for gram blocks

    @property
    def size(self) -> int:
        if self.kind == "vector":
            return int(self.var.shape[0]) if self.var.shape else 1
        k = self.var.shape[0]
        return int(k * k)

    def flat_expr(self):
        if self.kind == "vector":
            return self.var
        k = self.var.shape[0]
        return cp.reshape(self.var, (k * k,), order="C")


def vector_block(n: int, degree: int, name: str, min_degree: int = 0) -> Block:
    basis = monomials_upto(n, degree, min_degree)
    return Block(name, cp.Variable(len(basis), name=name), "vector", basis=basis)


def gram_block(n: int, degree: int, name: str) -> Block:
    if degree % 2:
        degree += 1
    z = monomials_upto(n, degree // 2)
    k = len(z)
    return Block(name, cp.Variable((k, k), name=name, PSD=True), "gram", z=z)


def block_poly_value(block: Block) -> Poly:
    """Extract the polynomial a block represents after solving."""
    v = block.var.value
    if v is None:
        raise RuntimeError(f"block {block.name} has no value")
    if block.kind == "vector":
        n = len(block.basis[0])
        return Poly(n, {e: float(c) for e, c in zip(block.basis, v)})
    n = len(block.z[0])
    out: dict[tuple, float] = {}
    for i, ei in enumerate(block.z):
        for j, ej in enumerate(block.z):
            key = tuple(a + b for a, b in zip(ei, ej))
            out[key] = out.get(key, 0.0) + float(v[i, j])
    return Poly(n, out)


class LinPoly:
    """Affine polynomial: constant coefficients plus, per decision block,
    sparse (exponent, flat-column) -> coefficient entries."""

    __slots__ = ("n", "const", "entries")

    def __init__(self, n: int):
        self.n = n
        self.const: dict[tuple, float] = {}
        self.entries: dict[str, dict[tuple, float]] = {}  # name -> {(exp, col): val}

    @staticmethod
    def from_poly(p: Poly) -> "LinPoly":
        out = LinPoly(p.n)
        out.const = dict(p.terms)
        return out

    @staticmethod
    def from_block(block: Block) -> "LinPoly":
        if block.kind == "vector":
            n = len(block.basis[0])
            out = LinPoly(n)
            out.entries[block.name] = {(e, i): 1.0 for i, e in enumerate(block.basis)}
            return out
        n = len(block.z[0])
        out = LinPoly(n)
        k = len(block.z)
        ent: dict[tuple, float] = {}
        for i, ei in enumerate(block.z):
            for j, ej in enumerate(block.z):
                key = (tuple(a + b for a, b in zip(ei, ej)), i * k + j)
                ent[key] = ent.get(key, 0.0) + 1.0
        out.entries[block.name] = ent
        return out

    def copy(self) -> "LinPoly":
        out = LinPoly(self.n)
        out.const = dict(self.const)
        out.entries = {k: dict(v) for k, v in self.entries.items()}
        return out

    def __add__(self, other: "LinPoly") -> "LinPoly":
        out = self.copy()
        for e, c in other.const.items():
            out.const[e] = out.const.get(e, 0.0) + c
        for name, ent in other.entries.items():
            dst = out.entries.setdefault(name, {})
            for key, val in ent.items():
                dst[key] = dst.get(key, 0.0) + val
        return out

    def __neg__(self) -> "LinPoly":
        out = LinPoly(self.n)
        out.const = {e: -c for e, c in self.const.items()}
        out.entries = {
            name: {key: -val for key, val in ent.items()}
            for name, ent in self.entries.items()
        }
        return out

    def __sub__(self, other: "LinPoly") -> "LinPoly":
        return self + (-other)

    def mul_poly(self, p: Poly) -> "LinPoly":
        out = LinPoly(self.n)
        for e1, c1 in self.const.items():
            for e2, c2 in p.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                out.const[key] = out.const.get(key, 0.0) + c1 * c2
        for name, ent in self.entries.items():
            dst: dict[tuple, float] = {}
            for (e1, col), val in ent.items():
                for e2, c2 in p.terms.items():
                    key = (tuple(a + b for a, b in zip(e1, e2)), col)
                    dst[key] = dst.get(key, 0.0) + val * c2
            out.entries[name] = dst
        return out

    def scale(self, a: float) -> "LinPoly":
        out = LinPoly(self.n)
        out.const = {e: a * c for e, c in self.const.items()}
        out.entries = {
            name: {key: a * val for key, val in ent.items()}
            for name, ent in self.entries.items()
        }
        return out

    def support(self) -> set[tuple]:
        s = set(self.const)
        for ent in self.entries.values():
            s.update(e for e, _ in ent)
        return s


def newton_basis(support: Sequence[tuple], n: int) -> list[tuple]:
    """Gram basis pruned by the Newton polytope of the (structural) support;
    degree-box fallback when the support is degenerate."""
    support = list(support)
    if not support:
        return [(0,) * n]
    degs = [sum(e) for e in support]
    dmax, dmin = max(degs), min(degs)
    cand = [m for m in monomials_upto(n, (dmax + 1) // 2) if 2 * sum(m) >= dmin]
    pts = np.asarray(support, dtype=float)
    if len(support) > n and np.linalg.matrix_rank(pts - pts[0]) == n:
        try:
            from scipy.spatial import ConvexHull

            hull = ConvexHull(pts)
            A, b = hull.equations[:, :-1], hull.equations[:, -1]
            kept = [
                m for m in cand
                if np.all(A @ (2.0 * np.asarray(m, float)) + b <= 1e-9)
            ]
            if kept:
                return kept
        except Exception:
            pass
    hi = [max(e[i] for e in support) for i in range(n)]
    kept = [m for m in cand if all(2 * m[i] <= max(hi[i], 1) for i in range(n))]
    return kept or cand


def sos_membership(expr: LinPoly, name: str, blocks: dict[str, Block],
                   basis: Sequence[tuple] | None = None, margin=None,
                   drop_constant: bool = False):
    """Constraints stating expr is a sum of squares.

    Adds a fresh Gram block to `blocks`; when `margin` (a scalar cvxpy
    variable) is given, the Gram is required to clear margin * I, so
    maximizing the margin drives solutions strictly inside the cone instead
    of leaving them on its boundary. Matching rows are equilibrated to unit
    scale, which the SOS statement allows (row scaling of equalities).

    drop_constant removes the constant monomial from the Gram basis: for
    constraints whose structure forces the value at the origin to vanish
    (rate and positivity rows built from origin-flat data), any SOS
    decomposition has a zero constant column anyway, and keeping it would pin
    the margin at zero.
    """
    n = expr.n
    z = list(basis) if basis is not None else newton_basis(expr.support(), n)
    if drop_constant:
        z = [m for m in z if any(m)]
    k = len(z)
    if margin is None:
        Q = cp.Variable((k, k), name=f"gram_{name}", PSD=True)
        side = []
    else:
        Q = cp.Variable((k, k), name=f"gram_{name}", symmetric=True)
        side = [Q - margin * np.eye(k) >> 0]
    gram = Block(f"gram_{name}", Q, "gram", z=z)
    blocks[gram.name] = gram
    gram_lin = LinPoly.from_block(gram)

    residual = expr - gram_lin
    exps = sorted(residual.support())
    row_of = {e: r for r, e in enumerate(exps)}
    n_rows = len(exps)

    const_vec = np.zeros(n_rows)
    for e, c in residual.const.items():
        const_vec[row_of[e]] += c

    # per-row equilibration scale
    row_scale = np.abs(const_vec).copy()
    by_block: dict[str, tuple] = {}
    for bname, ent in residual.entries.items():
        block = blocks[bname]
        rows, cols, vals = [], [], []
        for (e, col), val in ent.items():
            r = row_of[e]
            rows.append(r)
            cols.append(col)
            vals.append(val)
            row_scale[r] = max(row_scale[r], abs(val))
        by_block[bname] = (rows, cols, vals, block)
    row_scale = np.maximum(row_scale, 1.0)
    inv = 1.0 / row_scale

    terms = []
    for bname, (rows, cols, vals, block) in by_block.items():
        vals = [v * inv[r] for v, r in zip(vals, rows)]
        M = sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, block.size))
        terms.append(M @ block.flat_expr())
    lhs = terms[0] if terms else 0
    for t in terms[1:]:
        lhs = lhs + t
    return [lhs + const_vec * inv == 0] + side


def check_sos_numeric(p: Poly, tol: float = 1e-7) -> tuple[bool, float]:
    """Independent SOS re-verification of a fixed polynomial: fresh symmetric
    Gram matched exactly, maximizing its minimum eigenvalue.

    The polynomial is normalized to unit max-coefficient first (SOS membership
    is invariant under positive scaling), so the eigenvalue tolerance is
    relative to unit scale and the matching system stays conditioned.
    """
    scale = p.max_abs_coef()
    if scale == 0.0:
        return True, 0.0
    p = p * (1.0 / scale)
    n = p.n
    z = newton_basis(list(p.terms.keys()), n)
    k = len(z)
    Q = cp.Variable((k, k), symmetric=True)

    pair_entries: dict[tuple, float] = {}
    for i, ei in enumerate(z):
        for j, ej in enumerate(z):
            key = (tuple(a + b for a, b in zip(ei, ej)), i * k + j)
            pair_entries[key] = pair_entries.get(key, 0.0) + 1.0
    exps = sorted({e for e, _ in pair_entries} | set(p.terms))
    row_of = {e: r for r, e in enumerate(exps)}
    rows, cols, vals = [], [], []
    for (e, col), val in pair_entries.items():
        rows.append(row_of[e])
        cols.append(col)
        vals.append(val)
    M = sp.csr_matrix((vals, (rows, cols)), shape=(len(exps), k * k))
    rhs = np.zeros(len(exps))
    for e, c in p.terms.items():
        rhs[row_of[e]] += c
    cons = [M @ cp.reshape(Q, (k * k,), order="C") == rhs]
    prob = cp.Problem(cp.Maximize(cp.lambda_min(Q)), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except Exception:
        try:
            prob.solve(solver=cp.SCS, eps=1e-9, max_iters=200_000)
        except Exception:
            return False, -math.inf
    if Q.value is None:
        return False, -math.inf
    lam = float(np.linalg.eigvalsh(Q.value).min())
    return lam >= -tol, lam
