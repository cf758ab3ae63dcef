import math

import pytest

from ssfilter.problem import benchmark_problem
from ssfilter.closed_loop import (
    find_boundary_equilibria,
    make_controller,
    monitors,
    roa_certificate,
    scan_interior_equilibria,
    simulate,
)


def test_origin_stays_fixed(bench):
    traj = simulate(bench, (0.0, 0.0), "ours", dt=1e-3, T=1.0)
    assert traj.terminal_reason == "converged-to-origin"
    assert traj.states[-1] == (0.0, 0.0)


def test_ours_converges_from_side_point(bench):
    traj = simulate(bench, (2.0, -2.0), "ours", dt=1e-3, T=20.0)
    assert math.hypot(*traj.terminal_state()) <= 1e-3
    assert traj.min_b() >= -1e-6


def test_top_point_converges_to_boundary(bench):
    traj = simulate(bench, (0.0, 7.0), "ours", dt=1e-3, T=20.0)
    term = traj.terminal_state()
    assert math.dist(term, (0.0, 6.0)) <= 1e-2
    assert traj.min_b() >= -1e-6


def test_slack_qp_stalls_off_origin(bench):
    traj = simulate(bench, (0.3, 0.2), "ames", dt=1e-3, T=20.0)
    assert math.hypot(*traj.terminal_state()) > 0.05
    assert traj.terminal_reason == "converged-to-boundary-point"


def test_rk4_order(bench):
    # smooth single-region segments: halving dt cuts the terminal error vs a
    # dt/16 reference by at least the stated factor
    for x0 in ((5.0, -5.0), (-6.0, -2.0), (6.0, 3.0)):
        def terminal(dt):
            traj = simulate(bench, x0, "ours", dt=dt, T=0.5,
                            pos_tol=0.0, vel_tol=0.0)
            return traj.terminal_state()

        ref = terminal(0.02 / 16)
        e1 = math.dist(terminal(0.02), ref)
        e2 = math.dist(terminal(0.01), ref)
        assert e2 > 0
        assert e1 / e2 >= 12.0


def test_simulate_validates_arguments(bench):
    with pytest.raises(ValueError):
        simulate(bench, (1.0, 1.0), dt=-1e-3, T=1.0)
    with pytest.raises(ValueError):
        simulate(bench, (1.0, 1.0), dt=1e-2, T=1e-3)
    with pytest.raises(ValueError):
        make_controller(bench, "jankovic")


def test_monitors_forward_invariance_and_decrease(bench):
    traj = simulate(bench, (2.0, 6.0), "ours", dt=1e-3, T=20.0)
    mon = monitors(traj)
    assert mon.min_b >= -1e-6
    assert mon.max_Vdot_interior is not None
    assert mon.max_Vdot_interior < 0
    assert mon.lipschitz_estimate < 100.0
    # Lyapunov decrease at integration resolution
    for k in range(len(traj.V_vals) - 1):
        assert traj.V_vals[k + 1] <= traj.V_vals[k] + 1e-9


def test_monitors_origin_vacuous(bench):
    traj = simulate(bench, (0.0, 0.0), "ours", dt=1e-3, T=0.1)
    mon = monitors(traj)
    assert mon.max_Vdot_interior is None


def test_baseline_violates_decrease_near_stall(bench):
    # inside the stall ring the slack-QP flow points outward: V grows
    traj = simulate(bench, (0.03, 0.02), "ames", dt=1e-3, T=10.0)
    mon = monitors(traj, x_tol=1e-3)
    assert mon.max_Vdot_interior >= 0.0
    assert math.hypot(*traj.terminal_state()) > 0.05


def test_interior_scan_empty_for_ours(bench):
    found = scan_interior_equilibria(bench, "ours", box=(-4.0, 4.0), resolution=0.05)
    assert found == []


def test_interior_scan_finds_baseline_stall_ring(bench):
    found = scan_interior_equilibria(bench, "ames", box=(-1.0, 1.0), resolution=0.02)
    assert found
    for x, speed in found:
        assert speed <= 1e-6
        assert math.hypot(*x) == pytest.approx(math.sqrt(0.005), abs=1e-4)


def test_boundary_equilibria_locations(bench):
    rep = find_boundary_equilibria(bench, "ours")
    assert rep.origin_included
    pts = [r["x"] for r in rep.boundary_equilibria]
    assert len(pts) == 2
    assert min(math.dist(p, (0.0, 2.0)) for p in pts) <= 1e-6
    assert min(math.dist(p, (0.0, 6.0)) for p in pts) <= 1e-6
    for r in rep.boundary_equilibria:
        assert r["residual"] <= 1e-6
        assert abs(bench.b.evaluate(r["x"])) <= 1e-8
        assert r["classification"] == "clf-direction"


def test_obstacle_far_from_flow_gives_no_boundary_equilibria():
    # shift the obstacle off the stable manifold: the boundary carries no
    # force-balance points, only the origin remains
    from ssfilter.poly import Polynomial, poly_norm_sq
    from ssfilter.problem import CertificateProblem, ClassKSpec, ControlAffineSystem
    from ssfilter.poly import PolyVector

    n = 2
    x1 = Polynomial.variable(n, 0)
    x2 = Polynomial.variable(n, 1)
    f = PolyVector([x1, x2])
    one = Polynomial.constant(n, 1.0)
    zero = Polynomial.zero(n)
    # small obstacle far out at (30, 30): the Lyapunov flow there is far from
    # any force balance the filter could produce
    b = (x1 - 30.0) * (x1 - 30.0) + (x2 - 30.0) * (x2 - 30.0) - 1.0
    V = poly_norm_sq(n)
    prob = CertificateProblem(
        system=ControlAffineSystem(f, [[one, zero], [zero, one]]),
        b=b, V=V, alpha=ClassKSpec("linear-gain", 1.0),
        beta=ClassKSpec("scaled-tanh", 1000.0), gamma=V, p=100.0,
    )
    rep = find_boundary_equilibria(prob, "ours")
    assert rep.boundary_equilibria == [] or all(
        r["residual"] <= 1e-6 for r in rep.boundary_equilibria
    )


def test_roa_pass_below_boundary_level(bench):
    rep = roa_certificate(bench, 3.9, trials=8, seed=2)
    assert rep.status == "pass"
    assert rep.min_V_on_boundary == pytest.approx(4.0, abs=1e-9)


def test_roa_not_applicable_when_level_touches_boundary(bench):
    rep = roa_certificate(bench, 4.1, trials=4, seed=2)
    assert rep.status == "not-applicable"


def test_roa_tiny_level(bench):
    rep = roa_certificate(bench, 0.01, trials=4, seed=3, T=25.0)
    assert rep.status == "pass"


def test_solver_infeasible_recorded(bench):
    # a controller that always reports infeasibility must surface the state
    from ssfilter.filter_core import FilterSolution, CriticalRegion

    def bad_ctrl(x):
        return FilterSolution(
            u_star=(0.0, 0.0), s_star=1.0, lambda1=None, lambda2=None,
            region=CriticalRegion.UNCLASSIFIED, path="oracle",
            kkt_residual=math.inf, objective=math.inf, feasible=False,
        )

    traj = simulate(bench, (1.0, 1.0), controller=bad_ctrl, dt=1e-3, T=1.0)
    assert traj.terminal_reason == "solver-infeasible"
    assert traj.infeasible_state == (1.0, 1.0)
