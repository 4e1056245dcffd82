import math

import numpy as np
import pytest

from adaxlab.optim import BoxDomain, OptimizerConfig
from adaxlab.problems import (
    DecayProblem,
    QuadraticProblem,
    ReddiProblem,
    Trajectory,
    regret,
    regret_series,
    run,
)


# ---------------------------------------------------------------- problems

def test_reddi_costs_follow_three_step_pattern():
    p = ReddiProblem(C=3.0)
    assert p.cost_and_grad_scalar(1, 0.5) == (1.5, 3.0)
    assert p.cost_and_grad_scalar(2, 0.5) == (-0.5, -1.0)
    assert p.cost_and_grad_scalar(3, 0.5) == (-0.5, -1.0)
    assert p.cost_and_grad_scalar(4, 0.5) == (1.5, 3.0)
    assert p.best_fixed_point(9)[0] == -1.0
    assert (p.domain.lower, p.domain.upper) == (-1.0, 1.0)
    with pytest.raises(ValueError, match="C"):
        ReddiProblem(C=2.0)


def test_decay_costs_and_absorbing_region():
    p = DecayProblem(C=1e-3, lam=0.9999, n=1)
    c, g = p.cost_and_grad_scalar(5, 2.0)
    assert g == pytest.approx(1e-3 * 0.9999 ** 4, rel=1e-12)
    assert c == pytest.approx(2 * g, rel=1e-12)
    # during the vee phase the negative side still has a gradient
    assert p.cost_and_grad_scalar(1, -0.5) == (0.5e-3, -1e-3)
    # after it the region x <= 0 is flat
    assert p.cost_and_grad_scalar(2, -0.5) == (0.0, 0.0)
    assert p.cost_and_grad_scalar(2, 0.0) == (0.0, 0.0)
    assert p.best_fixed_point(100)[0] == 0.0
    assert p.domain.upper == pytest.approx(10.0)
    with pytest.raises(ValueError):
        DecayProblem(C=0.0)
    with pytest.raises(ValueError):
        DecayProblem(lam=1.0)
    with pytest.raises(ValueError):
        DecayProblem(n=0)


def test_decay_gradient_mass_is_bounded():
    p = DecayProblem(C=1e-3, lam=0.999, n=1)
    grads = [p.cost_and_grad_scalar(t, 1.0)[1] for t in range(1, 20001)]
    assert all(0 <= g <= 1e-3 * 0.999 ** (t - 1) for t, g in enumerate(grads, start=1))
    assert sum(grads) <= 1e-3 / (1 - 0.999) + 1e-12


def test_quadratic_best_fixed_point_diagonal():
    p = QuadraticProblem(np.diag([2.0, 2.0]), [1.0, 1.0])
    np.testing.assert_allclose(p.best_fixed_point(1), [0.5, 0.5])
    p = QuadraticProblem(np.diag([2.0, 2.0]), [1.0, 1.0], BoxDomain(-0.2, 0.2))
    np.testing.assert_allclose(p.best_fixed_point(1), [0.2, 0.2])


def test_quadratic_best_fixed_point_coupled_matches_scipy():
    from scipy.optimize import minimize

    A = np.array([[2.0, 0.8], [0.8, 1.0]])
    b = np.array([1.0, -0.5])
    dom = BoxDomain(np.array([-0.3, -0.3]), np.array([0.25, 0.25]))
    p = QuadraticProblem(A, b, dom)
    got = p.best_fixed_point(1)
    ref = minimize(lambda x: 0.5 * x @ A @ x - b @ x, np.zeros(2),
                   bounds=[(-0.3, 0.25), (-0.3, 0.25)]).x
    np.testing.assert_allclose(got, ref, atol=1e-4)


def test_quadratic_validation():
    with pytest.raises(ValueError, match="square"):
        QuadraticProblem(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError, match="symmetric"):
        QuadraticProblem([[1.0, 2.0], [0.0, 1.0]], [1.0, 1.0])
    with pytest.raises(NotImplementedError):
        QuadraticProblem(np.ones((3, 3)) + np.eye(3), np.ones(3),
                         BoxDomain(np.full(3, -0.1), np.full(3, 0.1))).best_fixed_point(1)


# ---------------------------------------------------------------- run loop

def test_run_records_pre_update_iterates():
    p = DecayProblem()
    traj = run(p, OptimizerConfig(kind="sgd", alpha=0.5), 1.0, 3)
    assert traj.iterates[0] == 1.0
    # x_2 = x_1 - 0.5*g_1
    assert traj.iterates[1] == pytest.approx(1.0 - 0.5 * 1e-3)
    assert traj.steps_run == 3 and not traj.stopped
    assert float(traj.x_final) == pytest.approx(traj.iterates[-1] + traj.deltas[-1])


def test_run_validates_inputs():
    p = ReddiProblem()
    cfg = OptimizerConfig(kind="sgd")
    with pytest.raises(ValueError, match="domain"):
        run(p, cfg, 1.5, 10)
    with pytest.raises(ValueError, match="T"):
        run(p, cfg, 0.0, -1)
    with pytest.raises(ValueError, match="record_every"):
        run(p, cfg, 0.0, 10, record_every=0)
    with pytest.raises(ValueError, match="engine"):
        run(p, cfg, 0.0, 10, engine="gpu")
    traj = run(p, cfg, 0.25, 0)
    assert len(traj) == 0 and float(traj.x_final) == 0.25


def test_run_record_every_keeps_final_step():
    p = DecayProblem()
    cfg = OptimizerConfig(kind="sgd", alpha=1e-6)
    assert run(p, cfg, 1.0, 10, record_every=3).ts.tolist() == [1, 4, 7, 10]
    assert run(p, cfg, 1.0, 11, record_every=3).ts.tolist() == [1, 4, 7, 10, 11]


def test_run_stop_when_sees_post_update_iterate():
    p = DecayProblem()
    cfg = OptimizerConfig(kind="adam", alpha=1e-2, beta1=0.0)
    traj = run(p, cfg, 1.0, 100000, stop_when=lambda x: x < 0)
    assert traj.stopped
    assert float(traj.x_final) < 0
    assert np.all(traj.iterates >= 0)
    assert traj.steps_run == traj.ts[-1]


def test_run_engines_agree_bitwise():
    problems = [ReddiProblem(C=3.0), DecayProblem(C=1e-3, lam=0.999, n=3)]
    configs = [
        OptimizerConfig(kind="sgd", alpha=0.01, step_schedule="invsqrt"),
        OptimizerConfig(kind="sgdm", alpha=0.01, beta1=0.7),
        OptimizerConfig(kind="adagrad", alpha=0.05),
        OptimizerConfig(kind="rmsprop", alpha=0.01, beta2=0.95),
        OptimizerConfig(kind="adam", alpha=0.01),
        OptimizerConfig(kind="adam", alpha=0.01, weight_decay=0.1, decay_mode="l2"),
        OptimizerConfig(kind="amsgrad", alpha=0.01, beta2=0.9),
        OptimizerConfig(kind="adax", alpha=0.01, step_schedule="invsqrt",
                        beta1_schedule="geometric", beta1_decay=0.99),
        OptimizerConfig(kind="adax", alpha=0.01, beta2_schedule="invtime"),
        OptimizerConfig(kind="adax", alpha=0.01, weight_decay=0.05, decay_mode="decoupled"),
        OptimizerConfig(kind="padam", alpha=0.05),
        OptimizerConfig(kind="padax", alpha=0.05, power_p=0.25),
    ]
    for p in problems:
        for cfg in configs:
            a = run(p, cfg, 0.5, 200, engine="scalar")
            b = run(p, cfg, 0.5, 200, engine="array")
            for name in ("ts", "iterates", "gradients", "costs", "deltas",
                         "vhats", "denoms", "vs", "alphas"):
                np.testing.assert_array_equal(getattr(a, name), getattr(b, name),
                                              err_msg=f"{p.__class__.__name__}/{cfg.kind}/{name}")
            assert float(a.x_final) == float(b.x_final)


def test_run_deterministic_rerun_is_identical():
    p = ReddiProblem()
    cfg = OptimizerConfig(kind="adax", step_schedule="invsqrt")
    a = run(p, cfg, 0.0, 500)
    b = run(p, cfg, 0.0, 500)
    np.testing.assert_array_equal(a.iterates, b.iterates)
    np.testing.assert_array_equal(a.vhats, b.vhats)


def test_update_sequence_independent_of_start_while_interior():
    # with beta1=0 the deltas depend only on the gradient schedule, which on
    # the decay problem is the same for any positive non-crossing start
    p = DecayProblem()
    for cfg in (OptimizerConfig(kind="sgdm", alpha=1e-4, beta1=0.0),
                OptimizerConfig(kind="adax", alpha=1e-3, beta1=0.0)):
        a = run(p, cfg, 1.0, 300)
        b = run(p, cfg, 0.7, 300)
        np.testing.assert_array_equal(a.deltas, b.deltas)
        assert np.all(a.iterates > 0) and np.all(b.iterates > 0)


def test_projection_keeps_iterates_in_box():
    p = ReddiProblem()
    cfg = OptimizerConfig(kind="sgdm", alpha=0.5, beta1=0.9)   # big steps
    traj = run(p, cfg, 0.0, 1000)
    assert np.all(traj.iterates >= -1.0) and np.all(traj.iterates <= 1.0)
    assert -1.0 <= float(traj.x_final) <= 1.0


def test_quadratic_run_converges():
    p = QuadraticProblem(np.diag([2.0, 0.5]), [1.0, -1.0])
    cfg = OptimizerConfig(kind="adam", alpha=0.05)
    traj = run(p, cfg, np.zeros(2), 2000)
    np.testing.assert_allclose(traj.x_final, [0.5, -2.0], atol=1e-3)


# ---------------------------------------------------------------- regret

def test_regret_constant_iterate_value():
    # holding x=+1 for one three-step block: costs 3,-1,-1 against -3,1,1
    traj = Trajectory(ts=np.arange(1, 4), iterates=np.ones(3),
                      gradients=np.zeros(3), costs=np.array([3.0, -1.0, -1.0]),
                      deltas=np.zeros(3), vhats=np.ones(3), denoms=np.ones(3),
                      vs=np.zeros(3), alphas=np.ones(3),
                      x_final=np.asarray(1.0), steps_run=3)
    assert regret(traj, ReddiProblem(C=3.0)) == pytest.approx(2.0)
    series = regret_series(traj, ReddiProblem(C=3.0))
    np.testing.assert_allclose(series, [6.0, 4.0, 2.0])


def test_regret_matches_direct_sum_on_real_run():
    p = ReddiProblem(C=3.0)
    cfg = OptimizerConfig(kind="sgd", alpha=0.3, step_schedule="invsqrt")
    T = 600
    traj = run(p, cfg, 0.0, T)
    direct = sum(p.cost_and_grad_scalar(t, traj.iterates[t - 1])[0]
                 - p.cost_and_grad_scalar(t, -1.0)[0] for t in range(1, T + 1))
    assert regret(traj, p) == pytest.approx(direct, rel=1e-12)
    assert regret(traj, p, T=10) == pytest.approx(regret_series(traj, p)[9])


def test_regret_rejects_downsampled_trace():
    p = ReddiProblem()
    traj = run(p, OptimizerConfig(kind="sgd"), 0.0, 30, record_every=5)
    with pytest.raises(ValueError, match="every step"):
        regret(traj, p)
