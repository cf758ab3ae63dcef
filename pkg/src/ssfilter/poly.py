"""Sparse multivariate polynomials with exact-coefficient arithmetic.

Carrier type for dynamics, certificates, rates, and synthesized controllers.
Variables are indexed, never named; a polynomial is a map from exponent
vectors to real coefficients.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

# Coefficients smaller than this (absolute) are dropped after arithmetic;
# SDP-synthesized polynomials carry numerical noise at this scale.
COEF_PRUNE_TOL = 1e-14


class Polynomial:
    """Sparse polynomial over indexed real variables.

    Immutable after construction; all operations return new instances.
    """

    __slots__ = ("num_vars", "terms", "_evaluator")

    def __init__(self, num_vars: int, terms: Mapping[tuple, float] | None = None):
        if num_vars < 1:
            raise ValueError("num_vars must be a positive integer")
        clean: dict[tuple[int, ...], float] = {}
        for exp, coef in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != num_vars:
                raise ValueError(f"exponent {exp} has length {len(exp)}, expected {num_vars}")
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent in {exp}")
            coef = float(coef)
            if coef != 0.0:
                clean[exp] = clean.get(exp, 0.0) + coef
        object.__setattr__(self, "num_vars", num_vars)
        object.__setattr__(self, "terms", {e: c for e, c in clean.items() if c != 0.0})
        object.__setattr__(self, "_evaluator", None)

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(num_vars: int) -> "Polynomial":
        return Polynomial(num_vars, {})

    @staticmethod
    def constant(num_vars: int, value: float) -> "Polynomial":
        return Polynomial(num_vars, {(0,) * num_vars: value})

    @staticmethod
    def variable(num_vars: int, index: int) -> "Polynomial":
        """The monomial x_index."""
        if not 0 <= index < num_vars:
            raise ValueError(f"variable index {index} out of range for {num_vars} vars")
        exp = tuple(1 if i == index else 0 for i in range(num_vars))
        return Polynomial(num_vars, {exp: 1.0})

    # -- basic queries -----------------------------------------------------

    def degree(self) -> int:
        """Max total degree over stored terms; 0 for the zero polynomial."""
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def constant_term(self) -> float:
        return self.terms.get((0,) * self.num_vars, 0.0)

    # -- evaluation --------------------------------------------------------

    def evaluate(self, x: Sequence[float]) -> float:
        """Evaluate at a point using compensated (Kahan) summation."""
        if len(x) != self.num_vars:
            raise ValueError(f"point has dimension {len(x)}, expected {self.num_vars}")
        total = 0.0
        comp = 0.0
        for exp, coef in self.terms.items():
            mono = coef
            for xi, e in zip(x, exp):
                if e == 1:
                    mono *= xi
                elif e:
                    mono *= xi**e
            y = mono - comp
            t = total + y
            comp = (t - total) - y
            total = t
        return total

    def __call__(self, x: Sequence[float]) -> float:
        return self.evaluate(x)

    def compile(self) -> Callable[[Sequence[float]], float]:
        """Build a fast closed-over evaluator (plain-float hot path).

        Bitwise-reproducible: terms are emitted in sorted exponent order.
        """
        if self._evaluator is not None:
            return self._evaluator
        if not self.terms:
            fn = lambda x: 0.0  # noqa: E731
        else:
            parts = []
            for exp in sorted(self.terms):
                coef = self.terms[exp]
                factors = [repr(coef)]
                for i, e in enumerate(exp):
                    if e <= 3:
                        factors.extend([f"x[{i}]"] * e)
                    else:
                        factors.append(f"x[{i}]**{e}")
                parts.append("*".join(factors))
            src = "lambda x: " + " + ".join(parts)
            fn = eval(src, {"__builtins__": {}})  # noqa: S307 - generated from numeric literals only
        object.__setattr__(self, "_evaluator", fn)
        return fn

    # -- calculus ----------------------------------------------------------

    def diff(self, index: int) -> "Polynomial":
        """Partial derivative with respect to x_index."""
        out: dict[tuple[int, ...], float] = {}
        for exp, coef in self.terms.items():
            e = exp[index]
            if e == 0:
                continue
            new = list(exp)
            new[index] = e - 1
            key = tuple(new)
            out[key] = out.get(key, 0.0) + coef * e
        return Polynomial(self.num_vars, out)

    def gradient(self) -> "PolyVector":
        return PolyVector([self.diff(i) for i in range(self.num_vars)])

    # -- arithmetic ---------------------------------------------------------

    def _check_compatible(self, other: "Polynomial") -> None:
        if self.num_vars != other.num_vars:
            raise ValueError("polynomials have different num_vars")

    def __add__(self, other: "Polynomial | float | int") -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.num_vars, other)
        self._check_compatible(other)
        out = dict(self.terms)
        for exp, coef in other.terms.items():
            out[exp] = out.get(exp, 0.0) + coef
        return Polynomial(self.num_vars, _prune(out))

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.num_vars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "Polynomial | float | int") -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.num_vars, other)
        return self + (-other)

    def __rsub__(self, other: float) -> "Polynomial":
        return (-self) + other

    def scale(self, a: float) -> "Polynomial":
        if a == 0.0:
            return Polynomial.zero(self.num_vars)
        return Polynomial(self.num_vars, _prune({e: a * c for e, c in self.terms.items()}))

    def __mul__(self, other: "Polynomial | float | int") -> "Polynomial":
        if isinstance(other, (int, float)):
            return self.scale(float(other))
        self._check_compatible(other)
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                out[key] = out.get(key, 0.0) + c1 * c2
        return Polynomial(self.num_vars, _prune(out))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.num_vars == other.num_vars
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.num_vars, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        if not self.terms:
            return "Polynomial(0)"
        bits = []
        for exp in sorted(self.terms):
            mono = "*".join(f"x{i}^{e}" for i, e in enumerate(exp) if e) or "1"
            bits.append(f"{self.terms[exp]:g}*{mono}")
        return "Polynomial(" + " + ".join(bits) + ")"

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        """JSON form with exponents sorted lexicographically for bit-stable output."""
        return {
            "num_vars": self.num_vars,
            "terms": [
                {"exp": list(exp), "coef": self.terms[exp]} for exp in sorted(self.terms)
            ],
        }

    @staticmethod
    def from_json(data: Mapping) -> "Polynomial":
        n = int(data["num_vars"])
        terms = {tuple(t["exp"]): float(t["coef"]) for t in data["terms"]}
        return Polynomial(n, terms)


def _prune(terms: dict) -> dict:
    return {e: c for e, c in terms.items() if abs(c) > COEF_PRUNE_TOL}


class PolyVector:
    """Ordered list of polynomials sharing num_vars (vector fields, gradients)."""

    __slots__ = ("entries", "num_vars")

    def __init__(self, entries: Iterable[Polynomial]):
        entries = list(entries)
        if not entries:
            raise ValueError("PolyVector must be non-empty")
        n = entries[0].num_vars
        if any(p.num_vars != n for p in entries):
            raise ValueError("all entries must share num_vars")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "num_vars", n)

    def __setattr__(self, name, value):
        raise AttributeError("PolyVector is immutable")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> Polynomial:
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    def evaluate(self, x: Sequence[float]) -> tuple[float, ...]:
        return tuple(p.evaluate(x) for p in self.entries)

    def compile(self) -> Callable[[Sequence[float]], tuple]:
        fns = [p.compile() for p in self.entries]
        return lambda x: tuple(f(x) for f in fns)

    def to_json(self) -> list:
        return [p.to_json() for p in self.entries]

    @staticmethod
    def from_json(data: Sequence[Mapping]) -> "PolyVector":
        return PolyVector([Polynomial.from_json(d) for d in data])

    def __eq__(self, other) -> bool:
        return isinstance(other, PolyVector) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"PolyVector({self.entries!r})"


def lie_derivative_f(p: Polynomial, f: PolyVector) -> Polynomial:
    """Lie derivative of p along the drift field: grad(p) . f."""
    if p.num_vars != f.num_vars or len(f) != p.num_vars:
        raise ValueError("dimension mismatch between polynomial and vector field")
    out = Polynomial.zero(p.num_vars)
    for i, fi in enumerate(f):
        out = out + p.diff(i) * fi
    return out


def lie_derivative_g(p: Polynomial, g: Sequence[Sequence[Polynomial]]) -> PolyVector:
    """Row vector grad(p) . g for an n-by-m matrix of polynomials."""
    n = len(g)
    if n != p.num_vars:
        raise ValueError("g must have num_vars rows")
    m = len(g[0])
    if any(len(row) != m for row in g):
        raise ValueError("g rows have inconsistent lengths")
    grads = [p.diff(i) for i in range(n)]
    cols = []
    for j in range(m):
        col = Polynomial.zero(p.num_vars)
        for i in range(n):
            col = col + grads[i] * g[i][j]
        cols.append(col)
    return PolyVector(cols)


def poly_norm_sq(num_vars: int) -> Polynomial:
    """Sum of squares of all variables: ||x||^2."""
    out = Polynomial.zero(num_vars)
    for i in range(num_vars):
        v = Polynomial.variable(num_vars, i)
        out = out + v * v
    return out


def finite_difference_gradient(
    fn: Callable[[Sequence[float]], float], x: Sequence[float], h: float = 1e-5
) -> list[float]:
    """Central finite differences; independent oracle for gradient tests."""
    x = list(map(float, x))
    out = []
    for i in range(len(x)):
        step = h * max(1.0, abs(x[i]))
        xp, xm = list(x), list(x)
        xp[i] += step
        xm[i] -= step
        out.append((fn(xp) - fn(xm)) / (2 * step))
    return out


def _compensated_sum(values: Iterable[float]) -> float:
    total = 0.0
    comp = 0.0
    for v in values:
        y = v - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def dot(a: Sequence[float], b: Sequence[float]) -> float:
    n = len(a)
    if n != len(b):
        raise ValueError("dimension mismatch in dot product")
    if n == 2:
        return a[0] * b[0] + a[1] * b[1]
    if n == 1:
        return a[0] * b[0]
    if n == 3:
        return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    return math.fsum(ai * bi for ai, bi in zip(a, b))
