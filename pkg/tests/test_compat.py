import math
import random

import numpy as np
import pytest

from ssfilter.compat import (
    boundary_grid,
    check_relaxed_compatibility,
    detect_circle,
    halfspace_pair_feasible,
    sample_boundary,
    scp_diagnostic,
    scs_margin,
)
from ssfilter.poly import Polynomial, PolyVector, poly_norm_sq
from ssfilter.problem import CertificateProblem, ClassKSpec, benchmark_problem


# -- half-space feasibility -------------------------------------------------


def test_antiparallel_boundary_rows_feasible(bench):
    # lower boundary point: both rows bound u2 from above; witness is the corner
    t = bench.eval_terms((0.0, 2.0))
    ok, info = halfspace_pair_feasible(t.Lgb, t.Lfb, t.LgV, t.LfV)
    assert ok
    assert info["witness"] == pytest.approx((0.0, -2.0), abs=1e-9)


def test_degenerate_cbf_row_infeasible():
    ok, info = halfspace_pair_feasible((0.0, 0.0), -1.0, (1.0, 0.0), 0.0)
    assert not ok
    assert info["conflict_kind"] == "cbf-degenerate"


def test_degenerate_clf_row_infeasible():
    ok, info = halfspace_pair_feasible((1.0, 0.0), 0.0, (0.0, 0.0), 2.0)
    assert not ok
    assert info["conflict_kind"] == "clf-degenerate"


def test_strict_rows_infeasible_above_obstacle(bench):
    # the classic constraint pair admits no input on the symmetry axis at x2=5
    t = bench.eval_terms((0.0, 5.0))
    ok, info = halfspace_pair_feasible(
        t.Lgb, t.Lfb + t.alpha_b, t.LgV, t.LfV + t.gamma_val
    )
    assert not ok
    assert info["conflict_kind"] == "parallel-conflict"


def test_degenerate_both_zero_feasible():
    ok, info = halfspace_pair_feasible((0.0, 0.0), 0.5, (0.0, 0.0), -0.5)
    assert ok
    assert info["witness"] == pytest.approx((0.0, 0.0))


def test_witnesses_satisfy_both_rows():
    rng = random.Random(5)
    for _ in range(400):
        m = rng.choice((1, 2, 3))
        a = tuple(rng.uniform(-3, 3) for _ in range(m))
        d = tuple(rng.uniform(-3, 3) for _ in range(m))
        c1, c2 = rng.uniform(-5, 5), rng.uniform(-5, 5)
        ok, info = halfspace_pair_feasible(a, c1, d, c2)
        if ok:
            u = info["witness"]
            au = sum(ai * ui for ai, ui in zip(a, u))
            du = sum(di * ui for di, ui in zip(d, u))
            assert au >= -c1 - 1e-7 * (1 + abs(c1))
            assert du <= -c2 + 1e-7 * (1 + abs(c2))


def _brute_force_feasible(a, c1, d, c2, center, half_width, res):
    m = len(a)
    axes = [np.arange(c - half_width, c + half_width + res / 2, res) for c in center]
    g = np.meshgrid(*axes, indexing="ij")
    u = np.stack([gi.ravel() for gi in g], axis=1)
    au = u @ np.asarray(a)
    du = u @ np.asarray(d)
    return bool(np.any((au >= -c1) & (du <= -c2)))


def test_decision_agrees_with_brute_force_grid():
    rng = random.Random(99)
    checked_feasible = checked_infeasible = 0
    for _ in range(300):
        m = rng.choice((1, 2, 3))
        a = tuple(rng.uniform(-2, 2) for _ in range(m))
        d = tuple(rng.uniform(-2, 2) for _ in range(m))
        c1, c2 = rng.uniform(-4, 4), rng.uniform(-4, 4)
        ok, info = halfspace_pair_feasible(a, c1, d, c2)
        res = 0.05 if m <= 2 else 0.25
        if ok:
            # the feasible set has nonempty interior for random instances, so
            # a grid around the least-norm witness must hit it
            w = info["witness"]
            assert _brute_force_feasible(a, c1, d, c2, w, 2.0, res)
            checked_feasible += 1
        else:
            # nothing feasible anywhere, checked over a wide box
            res = 0.05 if m == 1 else (0.1 if m == 2 else 0.5)
            assert not _brute_force_feasible(a, c1, d, c2, (0.0,) * m, 50.0, res)
            checked_infeasible += 1
    assert checked_feasible > 200
    assert checked_infeasible > 3


# -- boundary sampling ------------------------------------------------------


def test_angular_grid_parameterization(bench):
    pts = boundary_grid(bench.b, 360)
    assert len(pts) == 360
    for k in (0, 90, 180, 270):
        th = 2 * math.pi * k / 360
        assert pts[k] == pytest.approx((2 * math.sin(th), 4 - 2 * math.cos(th)))
    assert pts[0] == pytest.approx((0.0, 2.0))
    assert pts[180] == pytest.approx((0.0, 6.0), abs=1e-12)


def test_circle_detection(bench):
    c = detect_circle(bench.b)
    assert c is not None
    center, r = c
    assert center == pytest.approx((0.0, 4.0))
    assert r == pytest.approx(2.0)
    assert detect_circle(poly_norm_sq(2)) is None  # r^2 = 0: not a circle


def test_newton_boundary_samples(bench):
    pts, skipped = sample_boundary(bench.b, 100, seed=3)
    assert len(pts) == 100
    for x in pts:
        assert abs(bench.b.evaluate(x)) <= 1e-10


def test_newton_boundary_quartic():
    # quartic level set: Newton projection still lands on it
    x1, x2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    b = x1 * x1 * x1 * x1 + x2 * x2 - 2.0
    pts, _ = sample_boundary(b, 40, seed=1)
    assert len(pts) == 40
    for x in pts:
        assert abs(b.evaluate(x)) <= 1e-10


def test_empty_zero_set_diagnostic():
    b = poly_norm_sq(2) + 1.0  # strictly positive: empty boundary
    pts, skipped = sample_boundary(b, 5, seed=0)
    assert pts == []
    assert skipped > 0


# -- compatibility reports --------------------------------------------------


def test_relaxed_compatibility_holds_on_benchmark(bench):
    report = check_relaxed_compatibility(bench, count=360, seed=0, mode="relaxed")
    assert report.all_feasible
    assert len(report.samples) >= 360
    assert report.min_margin >= -1e-9


def test_strict_compatibility_fails_near_top(bench):
    report = check_relaxed_compatibility(bench, count=360, seed=0, mode="strict")
    assert not report.all_feasible
    # the failure must include the sample nearest the top of the obstacle
    nearest = min(report.samples, key=lambda s: math.dist(s.x, (0.0, 6.0)))
    assert not nearest.feasible
    assert nearest.conflict_kind == "parallel-conflict"


def test_degenerate_zero_V_trivially_feasible(bench):
    prob = CertificateProblem(
        system=bench.system, b=bench.b, V=Polynomial.zero(2),
        alpha=bench.alpha, beta=bench.beta, gamma=Polynomial.zero(2), p=100.0,
    )
    report = check_relaxed_compatibility(prob, count=36, seed=0)
    assert report.all_feasible


def test_mode_validation(bench):
    with pytest.raises(ValueError):
        check_relaxed_compatibility(bench, count=8, mode="lenient")


# -- SCS / SCP diagnostics ---------------------------------------------------


def _grid(lo, hi, steps):
    return [
        (lo + i * (hi - lo) / steps, lo + j * (hi - lo) / steps)
        for i in range(steps + 1)
        for j in range(steps + 1)
    ]


def test_scs_vacuous_on_benchmark(bench):
    rep = scs_margin(bench, _grid(-8, 8, 40))
    assert rep.status == "vacuous"
    assert math.isinf(rep.margin)


def test_scs_fails_for_bad_candidate_clf(poly_case):
    V = poly_norm_sq(2)
    prob = CertificateProblem(
        system=poly_case.system, b=poly_case.safe_set, V=V,
        alpha=ClassKSpec("linear-gain", 1.0),
        beta=ClassKSpec("scaled-tanh", 1000.0),
        gamma=V, p=100.0,
    )
    pt = (0.0, math.sqrt(20.0))
    rep = scs_margin(prob, [pt])
    assert rep.status == "checked"
    assert rep.margin == pytest.approx(-(40.0 + 20.0))
    assert rep.margin < 0


def test_gamma_halving_increases_margin(poly_case):
    V = poly_norm_sq(2)

    def margin_with(gamma):
        prob = CertificateProblem(
            system=poly_case.system, b=poly_case.safe_set, V=V,
            alpha=ClassKSpec("linear-gain", 1.0),
            beta=ClassKSpec("scaled-tanh", 1000.0),
            gamma=gamma, p=100.0,
        )
        return scs_margin(prob, [(0.0, math.sqrt(20.0))]).margin

    full = margin_with(V)
    halved = margin_with(V.scale(0.5))
    assert halved > full


def test_scp_diagnostic_flags_constant_term():
    x1 = Polynomial.variable(2, 0)
    ok = scp_diagnostic([x1, x1.scale(2.0)])
    assert ok["supports_scp"]
    bad = scp_diagnostic([x1 + 0.5, x1])
    assert not bad["supports_scp"]
