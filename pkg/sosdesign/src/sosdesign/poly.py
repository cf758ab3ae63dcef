"""Minimal sparse-polynomial arithmetic for building SOS programs.

Shares the filter package's JSON wire format ({"num_vars", "terms"}) but is
an independent implementation: the designer talks to the filter only through
files and CLI calls.
"""

from __future__ import annotations

import math
from itertools import combinations_with_replacement
from typing import Mapping, Sequence

PRUNE = 1e-14


class Poly:
    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: Mapping[tuple, float] | None = None):
        self.n = n
        out = {}
        for exp, coef in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            c = float(coef)
            if c != 0.0:
                out[exp] = out.get(exp, 0.0) + c
        self.terms = {e: c for e, c in out.items() if c != 0.0}

    @staticmethod
    def zero(n: int) -> "Poly":
        return Poly(n, {})

    @staticmethod
    def const(n: int, c: float) -> "Poly":
        return Poly(n, {(0,) * n: c})

    @staticmethod
    def var(n: int, i: int) -> "Poly":
        e = [0] * n
        e[i] = 1
        return Poly(n, {tuple(e): 1.0})

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Poly.const(self.n, other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Poly(self.n, {e: c for e, c in out.items() if abs(c) > PRUNE})

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.n, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Poly.const(self.n, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Poly(self.n, {e: c * other for e, c in self.terms.items()})
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                out[key] = out.get(key, 0.0) + c1 * c2
        return Poly(self.n, {e: c for e, c in out.items() if abs(c) > PRUNE})

    __rmul__ = __mul__

    def diff(self, i: int) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            ne = list(e)
            ne[i] -= 1
            out[tuple(ne)] = out.get(tuple(ne), 0.0) + c * e[i]
        return Poly(self.n, out)

    def eval(self, x: Sequence[float]) -> float:
        total = 0.0
        for e, c in self.terms.items():
            v = c
            for xi, ei in zip(x, e):
                if ei:
                    v *= xi**ei
            total += v
        return total

    def substitute_scale(self, factor: float) -> "Poly":
        """p(factor * x): coefficient of exponent e picks up factor^|e|."""
        return Poly(self.n, {e: c * factor ** sum(e) for e, c in self.terms.items()})

    def constant_term(self) -> float:
        return self.terms.get((0,) * self.n, 0.0)

    def max_abs_coef(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def to_json(self) -> dict:
        return {
            "num_vars": self.n,
            "terms": [{"exp": list(e), "coef": self.terms[e]} for e in sorted(self.terms)],
        }

    @staticmethod
    def from_json(data: Mapping) -> "Poly":
        return Poly(int(data["num_vars"]),
                    {tuple(t["exp"]): float(t["coef"]) for t in data["terms"]})

    def __repr__(self):
        if not self.terms:
            return "Poly(0)"
        bits = [f"{self.terms[e]:g}*x^{e}" for e in sorted(self.terms)]
        return "Poly(" + " + ".join(bits) + ")"


def norm_sq(n: int) -> Poly:
    out = Poly.zero(n)
    for i in range(n):
        out = out + Poly.var(n, i) * Poly.var(n, i)
    return out


def monomials_upto(n: int, degree: int, min_degree: int = 0) -> list[tuple]:
    """All exponent tuples with min_degree <= total degree <= degree,
    in a fixed deterministic order."""
    out = []
    for d in range(min_degree, degree + 1):
        for combo in combinations_with_replacement(range(n), d):
            e = [0] * n
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    # dedupe preserving order (combinations give unique multisets already)
    seen = set()
    uniq = []
    for e in out:
        if e not in seen:
            seen.add(e)
            uniq.append(e)
    return uniq


def grad(p: Poly) -> list[Poly]:
    return [p.diff(i) for i in range(p.n)]


def lie_f(p: Poly, f: Sequence[Poly]) -> Poly:
    out = Poly.zero(p.n)
    for i, fi in enumerate(f):
        out = out + p.diff(i) * fi
    return out


def lie_g(p: Poly, g: Sequence[Sequence[Poly]]) -> list[Poly]:
    n = len(g)
    m = len(g[0])
    gr = grad(p)
    return [
        sum((gr[i] * g[i][j] for i in range(n)), Poly.zero(p.n)) for j in range(m)
    ]
