import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from stlrrt.barrier import ConjunctionBarrier, TaskBarrier
from stlrrt.dynamics import Dynamics
from stlrrt.encoder import ClassKGain, build_lp, solve_lp
from stlrrt.errors import PreconditionError
from stlrrt.geometry import (
    LinearPredicate, Polytope, enumerate_vertices, sample_uniform, space_time_vertices,
)
from stlrrt.invariance import (
    RolloutPlan, cbf_qp_control, check_lie_condition, qp_constraints, rollout, rollout_grid,
)
from stlrrt.scenario import load_scenario
from stlrrt.solvers import (
    QuadprogSolver, min_norm_qp_warm, min_norm_qp_ws, qp_workspace, row_norms,
)

X1 = Polytope.box([-5], [5])
U1 = Polytope.box([-2], [2])
BAND = LinearPredicate([[1.0], [-1.0]], [-1.0, 3.0])  # 1 <= x <= 3
K1 = ClassKGain(1.0)


def band_cb(r=0.25, alpha=0.0, beta=10.0, gamma_bar=0.0):
    return ConjunctionBarrier([TaskBarrier(BAND, alpha, beta).bind(gamma_bar, r)], X1)


def test_interior_point_gets_zero_input():
    dyn = Dynamics([[0.0]], [[1.0]], None, X1, U1)
    u = cbf_qp_control(band_cb(), dyn, K1, [2.0], 1.0)
    np.testing.assert_allclose(u, [0.0], atol=1e-12)


def test_binding_row_is_tight():
    # drift pushes x toward the upper face; only the upper row binds
    dyn = Dynamics([[0.2]], [[1.0]], None, X1, U1)
    x = np.array([2.7])
    u = cbf_qp_control(band_cb(), dyn, K1, x, 1.0)
    np.testing.assert_allclose(u, [-0.49], atol=1e-9)
    b_row = 3.0 - 2.7 - 0.25
    rate = -(0.2 * x[0] + u[0])
    assert rate == pytest.approx(-K1.gain * b_row, abs=1e-9)


def test_after_last_deadline_only_inputs_matter():
    dyn = Dynamics([[0.0]], [[1.0]], None, X1, U1)
    u = cbf_qp_control(band_cb(beta=10.0), dyn, K1, [4.9], 12.0)
    np.testing.assert_array_equal(u, [0.0])


def test_lie_condition_qp_input_holds_adversarial_fails():
    dyn = Dynamics([[0.2]], [[1.0]], None, X1, U1)
    cb = band_cb()
    u = cbf_qp_control(cb, dyn, K1, [2.7], 1.0)
    ok, margin = check_lie_condition(cb, dyn, K1, [2.7], 1.0, u)
    assert ok and margin == pytest.approx(0.0, abs=1e-9)
    ok, margin = check_lie_condition(cb, dyn, K1, [2.7], 1.0, [1.0])
    assert not ok and margin == pytest.approx(-1.49)


def test_lie_margin_at_a_kink_is_min_over_active_rows():
    X = Polytope.box([-5, -5], [5, 5])
    dyn = Dynamics(np.zeros((2, 2)), np.eye(2), None, X, Polytope.box([-1, -1], [1, 1]))
    box = LinearPredicate.box([-1, -1], [1, 1])
    cb = ConjunctionBarrier([TaskBarrier(box, 0.0, 5.0).bind(0.0, 0.5)], X)
    # both upper faces sit at distance 0.2 from (0.3, 0.3)
    ok, margin = check_lie_condition(cb, dyn, K1, [0.3, 0.3], 1.0, [-0.1, 0.05])
    assert ok
    assert margin == pytest.approx(min(0.1 + 0.2, -0.05 + 0.2))


def test_rollout_rejects_start_outside_set():
    dyn = Dynamics([[0.0]], [[1.0]], None, X1, U1)
    with pytest.raises(PreconditionError):
        rollout(band_cb(), dyn, K1, [0.0], 0.1)


def test_rollout_grid_contains_switch_times():
    cb = ConjunctionBarrier([TaskBarrier(BAND, 0.33, 0.77).bind(1.0, 0.1)], X1)
    ts = rollout_grid(cb, 0.1)
    assert 0.33 in ts and 0.77 in ts
    assert ts[0] == 0.0 and ts[-1] == pytest.approx(0.77)
    assert np.all(np.diff(ts) > 0)


def test_rollout_stays_in_band():
    dyn = Dynamics([[0.2]], [[1.0]], None, X1, U1)
    cb = band_cb()
    tr = rollout(cb, dyn, K1, [2.7], 0.01)
    assert tr.barrier.min() >= -1e-3
    assert tr.dynamics_residual(dyn) < 1e-12


def test_python_and_compiled_paths_agree():
    dyn = Dynamics([[0.2]], [[1.0]], None, X1, U1)
    cb = band_cb()
    a = rollout(cb, dyn, K1, [2.7], 0.05)
    b = rollout(cb, dyn, K1, [2.7], 0.05, qp=QuadprogSolver())
    np.testing.assert_allclose(a.states, b.states, atol=1e-8)


def _lp_instance():
    X = Polytope.box([-10, -10], [10, 10])
    dyn = Dynamics(np.zeros((2, 2)), np.eye(2), None, X, Polytope.box([-5, -5], [5, 5]))
    tasks = [TaskBarrier(LinearPredicate.box([-1, -1], [5, 5]), 4, 6),
             TaskBarrier(LinearPredicate.box([-5, -3], [1, 3]), 9, 12)]
    res = solve_lp(build_lp(tasks, dyn, [0, 0], ClassKGain(0.2)))
    assert res.ok
    return res, dyn


def test_vertex_inputs_interpolate_to_feasible_controls():
    res, dyn = _lp_instance()
    cb, lay = res.barrier, res.layout
    rng = np.random.default_rng(4)
    VX = enumerate_vertices(dyn.state_set)
    for j, (s0, s1) in enumerate(lay.intervals):
        Z = space_time_vertices(VX, s0, s1).vertices
        Uv = res.vertex_inputs(j)
        for _ in range(10):
            x = sample_uniform(dyn.state_set, rng)
            t = rng.uniform(s0, s1 - 1e-9)
            # convex weights of (x, t) over the space-time vertices
            k = Z.shape[0]
            sol = linprog(np.zeros(k), A_eq=np.vstack([Z.T, np.ones(k)]),
                          b_eq=np.r_[x, t, 1.0], bounds=(0, None))
            u = sol.x @ Uv
            G, h = qp_constraints(cb, dyn, ClassKGain(0.2), x, t)
            assert np.all(G @ u >= h - 1e-7)


def test_room_rollout_violation_shrinks_with_dt():
    sc = load_scenario("room_service")
    best, results = sc.encode()
    cb = results[best].barrier
    worst = [-rollout(cb, sc.dyn, sc.kappa, sc.x0, dt).barrier.min() for dt in (0.04, 0.02, 0.01)]
    assert worst[0] > worst[1] > worst[2]
    assert worst[2] < 1e-3


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_qp_input_satisfies_lie_condition(seed):
    res, dyn = _lp_instance()
    cb = res.barrier
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, cb.beta_phi)
    x = sample_uniform(cb.set_at(t), rng)
    u = cbf_qp_control(cb, dyn, ClassKGain(0.2), x, t)
    assert check_lie_condition(cb, dyn, ClassKGain(0.2), x, t, u)[0]
    assert np.all(dyn.input_set.A @ u <= dyn.input_set.b + 1e-9)


def test_rollout_plan_is_reusable():
    res, dyn = _lp_instance()
    plan = RolloutPlan(res.barrier, dyn, ClassKGain(0.2), 0.05)
    a = plan.run([0.0, 0.0])
    b = plan.run([0.0, 0.0])
    np.testing.assert_array_equal(a.states, b.states)
    assert a.t1 == pytest.approx(res.barrier.horizon)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), guess=st.lists(st.integers(0, 7), min_size=1, max_size=3,
                                                        unique=True))
def test_warm_start_accepts_only_the_optimum(seed, guess):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(8, 3))
    h = rng.normal(size=8)
    ws = qp_workspace(3)
    status, _, nact = min_norm_qp_ws(G, h, 1e-10, row_norms(G), ws)
    if status != 0:
        return
    cold = ws[0].copy()
    if nact:
        assert min_norm_qp_warm(G, h, 1e-10, nact, ws)
        np.testing.assert_allclose(ws[0], cold, atol=1e-9)
    # any guessed set that passes the KKT check must give the same (unique) optimum
    ws[1][:len(guess)] = guess
    if min_norm_qp_warm(G, h, 1e-10, len(guess), ws):
        np.testing.assert_allclose(ws[0], cold, atol=1e-7)
