"""Control-affine system, certificate bundle, and per-state filter quantities.

`CertificateProblem` packages everything the filter needs (dynamics, barrier,
Lyapunov function, class-K shapes, rate, slack penalty, nominal controller);
`eval_terms` evaluates all state-dependent quantities in one pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

from .poly import Polynomial, PolyVector, dot, lie_derivative_f, lie_derivative_g, poly_norm_sq

# Scale-aware tolerance for "this gradient row is zero" tests.
GRAD_TOL = 1e-9


def grad_tol(x: Sequence[float]) -> float:
    return GRAD_TOL * (1.0 + math.sqrt(sum(v * v for v in x)))


@dataclass(frozen=True)
class ClassKSpec:
    """Extended class-K function: strictly increasing, maps 0 to 0.

    kind "linear-gain" is r -> gain*r; "scaled-tanh" is r -> tanh(gain*r),
    bounded by 1 in magnitude as the filter's activation shaping requires.
    """

    kind: str
    gain: float

    def __post_init__(self):
        if self.kind not in ("linear-gain", "scaled-tanh"):
            raise ValueError(f"unknown class-K kind {self.kind!r}")
        if self.gain <= 0:
            raise ValueError("class-K gain must be positive")

    def __call__(self, r: float) -> float:
        if self.kind == "linear-gain":
            return self.gain * r
        return math.tanh(self.gain * r)

    def to_json(self) -> dict:
        return {"kind": self.kind, "gain": self.gain}

    @staticmethod
    def from_json(data: Mapping) -> "ClassKSpec":
        return ClassKSpec(kind=data["kind"], gain=float(data["gain"]))


class ControlAffineSystem:
    """xdot = f(x) + g(x) u with polynomial f (n) and g (n x m)."""

    def __init__(self, f: PolyVector, g: Sequence[Sequence[Polynomial]]):
        n = len(f)
        if f.num_vars != n:
            raise ValueError("f must be a length-n vector of polynomials in n variables")
        if len(g) != n:
            raise ValueError("g must have n rows")
        m = len(g[0])
        if any(len(row) != m for row in g) or any(
            p.num_vars != n for row in g for p in row
        ):
            raise ValueError("g must be an n x m matrix of polynomials in n variables")
        origin = (0.0,) * n
        if any(abs(v) > 1e-12 for v in f.evaluate(origin)):
            raise ValueError("drift must vanish at the origin: f(0) = 0")
        self.n = n
        self.m = m
        self.f = f
        self.g = [list(row) for row in g]
        self._f_fn = f.compile()
        self._g_fns = [[p.compile() for p in row] for row in self.g]

    def f_at(self, x: Sequence[float]) -> tuple[float, ...]:
        return self._f_fn(x)

    def g_at(self, x: Sequence[float]) -> list[list[float]]:
        return [[fn(x) for fn in row] for row in self._g_fns]

    def xdot(self, x: Sequence[float], u: Sequence[float]) -> tuple[float, ...]:
        fx = self._f_fn(x)
        return tuple(
            fx[i] + math.fsum(self._g_fns[i][j](x) * u[j] for j in range(self.m))
            for i in range(self.n)
        )

    def to_json(self) -> dict:
        return {"f": self.f.to_json(), "g": [[p.to_json() for p in row] for row in self.g]}

    @staticmethod
    def from_json(data: Mapping) -> "ControlAffineSystem":
        f = PolyVector.from_json(data["f"])
        g = [[Polynomial.from_json(p) for p in row] for row in data["g"]]
        return ControlAffineSystem(f, g)


class NominalController:
    """Nominal input map pi(x): zero, linear state feedback, or polynomial."""

    def __init__(self, kind: str, *, K: Sequence[Sequence[float]] | None = None,
                 entries: PolyVector | None = None, m: int | None = None, n: int | None = None):
        self.kind = kind
        self.K = [list(map(float, row)) for row in K] if K is not None else None
        self.entries = entries
        if kind == "zero":
            if m is None:
                raise ValueError("zero controller needs the input dimension m")
            self.m = m
        elif kind == "linear":
            if not self.K:
                raise ValueError("linear controller needs a gain matrix K")
            self.m = len(self.K)
        elif kind == "polynomial":
            if entries is None:
                raise ValueError("polynomial controller needs entries")
            origin = (0.0,) * entries.num_vars
            if any(abs(v) > 1e-12 for v in entries.evaluate(origin)):
                raise ValueError("nominal controller must satisfy pi(0) = 0")
            self.m = len(entries)
            self._fns = entries.compile()
        else:
            raise ValueError(f"unknown controller kind {kind!r}")

    def __call__(self, x: Sequence[float]) -> tuple[float, ...]:
        if self.kind == "zero":
            return (0.0,) * self.m
        if self.kind == "linear":
            return tuple(math.fsum(kij * xj for kij, xj in zip(row, x)) for row in self.K)
        return self._fns(x)

    @staticmethod
    def zero(m: int) -> "NominalController":
        return NominalController("zero", m=m)

    @staticmethod
    def linear(K: Sequence[Sequence[float]]) -> "NominalController":
        return NominalController("linear", K=K)

    @staticmethod
    def polynomial(entries: PolyVector) -> "NominalController":
        return NominalController("polynomial", entries=entries)

    def to_json(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "linear":
            return {"kind": "linear", "K": self.K}
        return {"kind": "polynomial", "entries": self.entries.to_json()}

    @staticmethod
    def from_json(data: Mapping, m: int) -> "NominalController":
        kind = data.get("kind", "zero")
        if kind == "zero":
            return NominalController.zero(m)
        if kind == "linear":
            return NominalController.linear(data["K"])
        return NominalController.polynomial(PolyVector.from_json(data["entries"]))


class FilterTerms(NamedTuple):
    """All state-dependent filter quantities from one evaluation pass."""

    x: tuple
    pi_x: tuple
    b_val: float
    V_val: float
    gamma_val: float
    alpha_b: float
    beta_b: float
    Lfb: float
    Lgb: tuple
    LfV: float
    LgV: tuple
    F_b: float
    F_b_prime: float
    F_V: float
    p: float


class CertificateProblem:
    """System + (b, V) certificates + filter parameters (alpha, beta, gamma, p, pi)."""

    def __init__(
        self,
        system: ControlAffineSystem,
        b: Polynomial,
        V: Polynomial,
        alpha: ClassKSpec,
        beta: ClassKSpec,
        gamma: Polynomial,
        p: float,
        pi: NominalController | None = None,
    ):
        n = system.n
        for name, poly in (("b", b), ("V", V), ("gamma", gamma)):
            if poly.num_vars != n:
                raise ValueError(f"{name} must be a polynomial in {n} variables")
        origin = (0.0,) * n
        if abs(V.evaluate(origin)) > 1e-12:
            raise ValueError("V(0) must be 0")
        if abs(gamma.evaluate(origin)) > 1e-12:
            raise ValueError("gamma(0) must be 0")
        if p <= 0:
            raise ValueError("slack penalty p must be positive")
        pi = pi if pi is not None else NominalController.zero(system.m)
        if pi.m != system.m:
            raise ValueError("nominal controller dimension must match system input dimension")
        if any(abs(v) > 1e-12 for v in pi(origin)):
            raise ValueError("nominal controller must satisfy pi(0) = 0")

        self.system = system
        self.b = b
        self.V = V
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.p = float(p)
        self.pi = pi

        # Precompile everything the hot path touches.
        self.b_fn = b.compile()
        self.V_fn = V.compile()
        self.gamma_fn = gamma.compile()
        self.Lfb_poly = lie_derivative_f(b, system.f)
        self.LfV_poly = lie_derivative_f(V, system.f)
        self.Lgb_polys = lie_derivative_g(b, system.g)
        self.LgV_polys = lie_derivative_g(V, system.g)
        self._Lfb_fn = self.Lfb_poly.compile()
        self._LfV_fn = self.LfV_poly.compile()
        self._Lgb_fn = self.Lgb_polys.compile()
        self._LgV_fn = self.LgV_polys.compile()
        self.gradV_fns = [V.diff(i).compile() for i in range(n)]

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def m(self) -> int:
        return self.system.m

    def eval_terms(self, x: Sequence[float]) -> FilterTerms:
        """Evaluate every filter quantity at x (pure, deterministic)."""
        if len(x) != self.n:
            raise ValueError(f"state has dimension {len(x)}, expected {self.n}")
        x = tuple(map(float, x))
        pi_x = self.pi(x)
        b_val = self.b_fn(x)
        alpha_b = self.alpha(b_val)
        beta_b = self.beta(b_val)
        Lfb = self._Lfb_fn(x)
        Lgb = self._Lgb_fn(x)
        LfV = self._LfV_fn(x)
        LgV = self._LgV_fn(x)
        gamma_val = self.gamma_fn(x)
        F_b = dot(Lgb, pi_x) + Lfb + alpha_b
        F_b_prime = dot(Lgb, Lgb) + alpha_b * alpha_b / self.p
        F_V = LfV + dot(LgV, pi_x) + beta_b * gamma_val
        return FilterTerms(
            x=x,
            pi_x=pi_x,
            b_val=b_val,
            V_val=self.V_fn(x),
            gamma_val=gamma_val,
            alpha_b=alpha_b,
            beta_b=beta_b,
            Lfb=Lfb,
            Lgb=Lgb,
            LfV=LfV,
            LgV=LgV,
            F_b=F_b,
            F_b_prime=F_b_prime,
            F_V=F_V,
            p=self.p,
        )

    def clf_candidate_witness(self, x: Sequence[float]) -> dict:
        """Pointwise CLF-failure witness: LgV = 0 with LfV + gamma > 0 off the origin."""
        x = tuple(map(float, x))
        LfV = self._LfV_fn(x)
        LgV = self._LgV_fn(x)
        at_origin = all(abs(v) <= 1e-12 for v in x)
        norm_LgV = math.sqrt(dot(LgV, LgV))
        violated = (
            not at_origin
            and norm_LgV <= grad_tol(x)
            and LfV + self.gamma_fn(x) > 0.0
        )
        return {"is_violated": violated, "LfV": LfV, "LgV": LgV}

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "system": self.system.to_json(),
            "b": self.b.to_json(),
            "V": self.V.to_json(),
            "alpha": self.alpha.to_json(),
            "beta": self.beta.to_json(),
            "gamma": self.gamma.to_json(),
            "p": self.p,
            "pi": self.pi.to_json(),
        }

    @staticmethod
    def from_json(data: Mapping) -> "CertificateProblem":
        system = ControlAffineSystem.from_json(data["system"])
        return CertificateProblem(
            system=system,
            b=Polynomial.from_json(data["b"]),
            V=Polynomial.from_json(data["V"]),
            alpha=ClassKSpec.from_json(data["alpha"]),
            beta=ClassKSpec.from_json(data["beta"]),
            gamma=Polynomial.from_json(data["gamma"]),
            p=float(data["p"]),
            pi=NominalController.from_json(data.get("pi", {"kind": "zero"}), system.m),
        )


def benchmark_problem(pi: NominalController | None = None) -> CertificateProblem:
    """Planar integrator-with-drift benchmark: xdot = x + u, circular obstacle.

    b(x) = ||x - (0,4)||^2 - 4, V = x'x, gamma = V, alpha(r) = r,
    beta(r) = tanh(1000 r), p = 100, pi = 0 unless overridden.
    """
    n = 2
    x1 = Polynomial.variable(n, 0)
    x2 = Polynomial.variable(n, 1)
    f = PolyVector([x1, x2])
    one = Polynomial.constant(n, 1.0)
    zero = Polynomial.zero(n)
    g = [[one, zero], [zero, one]]
    b = x1 * x1 + x2 * x2 - 8.0 * x2 + 12.0
    V = poly_norm_sq(n)
    return CertificateProblem(
        system=ControlAffineSystem(f, g),
        b=b,
        V=V,
        alpha=ClassKSpec("linear-gain", 1.0),
        beta=ClassKSpec("scaled-tanh", 1000.0),
        gamma=V,
        p=100.0,
        pi=pi,
    )


@dataclass(frozen=True)
class PolynomialCase:
    """Second-order polynomial system with semi-algebraic safe set and domain."""

    system: ControlAffineSystem
    safe_set: Polynomial   # s(x) >= 0 outside the obstacle
    domain: Polynomial     # w(x) >= 0 on the working region


def polynomial_case_problem() -> PolynomialCase:
    """Polynomial system with state-dependent (sign-flipping) input gains."""
    n = 2
    x1 = Polynomial.variable(n, 0)
    x2 = Polynomial.variable(n, 1)
    f = PolyVector([x2, x1 + x1 * x1 * x1 * (1.0 / 3.0) + x2])
    zero = Polynomial.zero(n)
    g = [
        [0.2 * x1 * x1 + 0.2 * x2 + 1.0, zero],
        [zero, -0.2 * x2 * x2 + 0.2 * x1 + 4.0],
    ]
    s = x1 * x1 + (x2 - 1.0) * (x2 - 1.0) - 0.25
    w = -1.0 * x1 * x1 - x2 * x2 + 100.0
    return PolynomialCase(system=ControlAffineSystem(f, g), safe_set=s, domain=w)


def load_problem(path_or_data) -> CertificateProblem:
    """Load a problem JSON file; accepts a bare problem or a design artifact
    wrapper carrying the problem under the "problem" key."""
    if isinstance(path_or_data, (str,)):
        with open(path_or_data) as fh:
            data = json.load(fh)
    else:
        data = path_or_data
    if "problem" in data and "system" not in data:
        data = data["problem"]
    return CertificateProblem.from_json(data)
