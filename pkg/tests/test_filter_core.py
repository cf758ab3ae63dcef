import math
import random

import pytest

from ssfilter.filter_core import (
    CriticalRegion,
    RelaxedCompatibilityError,
    classify_region,
    closed_form_solve,
    constraint_values,
    feasible_point,
    oracle_solve,
    verify_kkt,
)
from ssfilter.problem import NominalController, benchmark_problem


def solve_both(bench, x):
    t = bench.eval_terms(x)
    return closed_form_solve(t), oracle_solve(t), t


# -- oracle examples -------------------------------------------------------


def test_oracle_lower_boundary(bench):
    sol = oracle_solve(bench.eval_terms((0.0, 2.0)))
    # both rows reduce to u2 <= -2; min-norm picks the corner
    assert sol.u_star == pytest.approx((0.0, -2.0), abs=1e-9)
    assert sol.s_star == pytest.approx(1.0, abs=1e-9)
    assert sol.feasible


def test_oracle_upper_boundary(bench):
    sol = oracle_solve(bench.eval_terms((0.0, 6.0)))
    assert sol.u_star == pytest.approx((0.0, -6.0), abs=1e-9)
    assert sol.s_star == pytest.approx(1.0, abs=1e-9)


def test_oracle_origin(bench):
    sol = oracle_solve(bench.eval_terms((0.0, 0.0)))
    assert sol.u_star == (0.0, 0.0)
    assert sol.s_star == 1.0


def test_oracle_brute_force_cross_check(bench):
    # independent 2-D refinement over (u2, s) at the lower boundary point,
    # where symmetry pins u1 = 0
    t = bench.eval_terms((0.0, 2.0))
    best, best_val = None, math.inf
    for i in range(4001):
        u2 = -4.0 + 4.0 * i / 4000.0
        for j in range(41):
            s = 0.5 + j / 40.0
            f1, f2 = constraint_values(t, (0.0, u2), s)
            if f1 >= -1e-12 and f2 <= 1e-12:
                val = 0.5 * u2 * u2 + 50.0 * (s - 1.0) ** 2
                if val < best_val:
                    best, best_val = (u2, s), val
    sol = oracle_solve(t)
    assert best[0] == pytest.approx(sol.u_star[1], abs=1e-3)
    assert best[1] == pytest.approx(sol.s_star, abs=1e-3)
    assert best_val == pytest.approx(sol.objective, abs=1e-3)


# -- classification --------------------------------------------------------


def test_classify_far_field_with_stabilizing_pi():
    pi = NominalController.linear([[-2.0, 0.0], [0.0, -2.0]])
    prob = benchmark_problem(pi=pi)
    # far from the obstacle the stabilizing input satisfies both rows strictly
    region = classify_region(prob.eval_terms((0.5, -0.5)))
    assert region is CriticalRegion.NO_ACTIVE


def test_classify_lower_boundary_degenerate(bench):
    # the seam point: strict predicates of the regular regions fail
    t = bench.eval_terms((0.0, 2.0))
    assert t.F_V * t.F_b_prime - t.F_b * (t.Lgb[0] * t.LgV[0] + t.Lgb[1] * t.LgV[1]) == pytest.approx(0.0, abs=1e-9)
    assert classify_region(t) is CriticalRegion.UNCLASSIFIED


def test_classify_clf_active_quadrant(bench):
    t = bench.eval_terms((-2.0, -2.0))
    assert t.F_V >= 0
    assert classify_region(t) is CriticalRegion.CLF_ACTIVE


def test_classify_origin_flat(bench):
    assert classify_region(bench.eval_terms((0.0, 0.0))) is CriticalRegion.CLF_FLAT


# -- closed form -----------------------------------------------------------


def test_closed_form_passthrough_region():
    pi = NominalController.linear([[-2.0, 0.0], [0.0, -2.0]])
    prob = benchmark_problem(pi=pi)
    t = prob.eval_terms((0.5, -0.5))
    sol = closed_form_solve(t)
    assert sol.region is CriticalRegion.NO_ACTIVE
    assert sol.u_star == pytest.approx(t.pi_x)
    assert sol.s_star == 1.0


def test_closed_form_matches_oracle_regular_point(bench):
    c, o, _ = solve_both(bench, (3.0, 4.0))
    assert c.objective == pytest.approx(o.objective, rel=1e-8)
    assert c.u_star == pytest.approx(o.u_star, abs=1e-8)


def test_closed_form_origin(bench):
    sol = closed_form_solve(bench.eval_terms((0.0, 0.0)))
    assert sol.u_star == (0.0, 0.0)
    assert sol.s_star == 1.0


def test_closed_form_oracle_equivalence_sample(bench):
    rng = random.Random(123)
    for _ in range(800):
        x = (rng.uniform(-8, 8), rng.uniform(-8, 8))
        c, o, t = solve_both(bench, x)
        assert c.feasible and o.feasible
        assert abs(c.objective - o.objective) <= 1e-8 * (1.0 + abs(o.objective))
        assert c.kkt_residual <= 1e-8
        assert o.kkt_residual <= 1e-8


def test_region_soundness_generic_regions(bench):
    # wherever a regular region is labeled, the branch formula itself (no
    # oracle fallback) must be the KKT-consistent optimum
    rng = random.Random(321)
    seen = set()
    for _ in range(800):
        x = (rng.uniform(-8, 8), rng.uniform(-8, 8))
        t = bench.eval_terms(x)
        region = classify_region(t)
        sol = closed_form_solve(t)
        if region in (
            CriticalRegion.NO_ACTIVE,
            CriticalRegion.CBF_ACTIVE,
            CriticalRegion.CLF_ACTIVE,
            CriticalRegion.BOTH_ACTIVE,
        ):
            seen.add(region)
            assert sol.path == "closed-form"
            assert verify_kkt(sol, t) <= 1e-8
            f1, f2 = constraint_values(t, sol.u_star, sol.s_star)
            assert f1 >= -1e-9 * (1 + abs(f1))
            assert f2 <= 1e-9 * (1 + abs(f2))
    # the sample must actually exercise the main regions
    assert CriticalRegion.CLF_ACTIVE in seen
    assert CriticalRegion.BOTH_ACTIVE in seen


def test_slack_law(bench):
    rng = random.Random(77)
    for _ in range(300):
        x = (rng.uniform(-8, 8), rng.uniform(-8, 8))
        sol = closed_form_solve(bench.eval_terms(x))
        if sol.lambda1 is not None:
            expect = 1.0 + sol.lambda1 * bench.alpha(bench.b.evaluate(x)) / bench.p
            assert sol.s_star == pytest.approx(expect, rel=1e-8, abs=1e-8)


def test_monotone_safety_passthrough():
    pi = NominalController.linear([[-2.0, 0.0], [0.0, -2.0]])
    prob = benchmark_problem(pi=pi)
    rng = random.Random(9)
    hits = 0
    for _ in range(400):
        x = (rng.uniform(-3, 3), rng.uniform(-3, 3))
        t = prob.eval_terms(x)
        if t.b_val > 0 and t.F_b > 0 and t.F_V < 0:
            hits += 1
            sol = closed_form_solve(t)
            assert sol.u_star == pytest.approx(t.pi_x, abs=1e-12)
    assert hits > 50


# -- KKT verification ------------------------------------------------------


def test_verify_kkt_on_oracle_solutions(bench):
    rng = random.Random(55)
    for _ in range(500):
        x = (rng.uniform(-8, 8), rng.uniform(-8, 8))
        t = bench.eval_terms(x)
        sol = oracle_solve(t)
        assert verify_kkt(sol, t) <= 1e-8


def test_verify_kkt_detects_perturbation(bench):
    t = bench.eval_terms((3.0, 4.0))
    sol = oracle_solve(t)
    bad = sol._replace(u_star=(sol.u_star[0] + 0.1, sol.u_star[1]))
    assert verify_kkt(bad, t) > 0.05


def test_verify_kkt_origin_exact(bench):
    t = bench.eval_terms((0.0, 0.0))
    sol = closed_form_solve(t)
    l1 = sol.lambda1 if sol.lambda1 is not None else 0.0
    l2 = sol.lambda2 if sol.lambda2 is not None else 0.0
    stat_u = math.sqrt(sum(
        (sol.u_star[i] - t.pi_x[i] - l1 * t.Lgb[i] + l2 * t.LgV[i]) ** 2
        for i in range(2)
    ))
    stat_s = abs(t.p * (sol.s_star - 1.0) - l1 * t.alpha_b)
    assert stat_u == 0.0 and stat_s == 0.0


# -- constructive feasibility ----------------------------------------------


def test_feasible_point_interior(bench):
    t = bench.eval_terms((0.0, 1.0))
    assert t.b_val == pytest.approx(5.0)
    u, s = feasible_point(t, (0.0, -2.0))
    f1, _ = constraint_values(t, u, s)
    assert f1 >= -1e-9


def test_feasible_point_boundary(bench):
    t = bench.eval_terms((0.0, 2.0))
    u, s = feasible_point(t, (0.0, -2.0))
    assert s == 0.0
    f1, _ = constraint_values(t, u, s)
    assert f1 >= -1e-9


def test_feasible_point_zero_numerator(bench):
    # Lgb.u = -Lfb makes the positive-side slack collapse to 1
    t = bench.eval_terms((2.0, 0.0))
    u_clf = (-3.0, -0.5)  # Lgb = (4, -8), Lfb = 8: barrier flow is exactly 0
    assert t.Lfb + sum(a * b for a, b in zip(t.Lgb, u_clf)) == pytest.approx(0.0)
    _, f2 = constraint_values(t, u_clf, 1.0)
    assert f2 <= 1e-12
    _, s = feasible_point(t, u_clf)
    assert s == pytest.approx(1.0)


def test_feasible_point_rejects_clf_infeasible_input(bench):
    t = bench.eval_terms((0.0, 1.0))
    with pytest.raises(ValueError):
        feasible_point(t, (0.0, 10.0))


def test_feasible_point_boundary_violation_error(bench):
    # on the boundary a Lyapunov-feasible input with negative barrier flow
    # witnesses a relaxed-compatibility violation
    t = bench.eval_terms((0.0, 2.0))
    t = t._replace(Lfb=-100.0, F_b=-100.0)
    with pytest.raises(RelaxedCompatibilityError):
        feasible_point(t, (0.0, -2.0))


def test_infeasible_reported_not_clamped(bench):
    # degenerate rows with an impossible barrier requirement
    t = bench.eval_terms((0.0, 2.0))
    t = t._replace(Lgb=(0.0, 0.0), alpha_b=0.0, Lfb=-1.0, F_b=-1.0, F_b_prime=0.0)
    sol = oracle_solve(t)
    assert not sol.feasible
    assert sol.objective == math.inf
