"""Unit tests for the gradient-descent solver and stepsize rules."""

import numpy as np
import pytest

from symcp import tensor_core as tc
from symcp.factored_objective import ObjectiveSpec, QuadraticLoss, dist, make_ground_truth
from symcp.gd_solver import (
    RunTrace,
    StepsizePolicy,
    StopRule,
    adaptive_stepsize,
    constant_stepsize,
    contraction_factor,
    run,
    step,
)


def unit_sphere_factors(n, r, seed):
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n, r))
    return U / np.linalg.norm(U, axis=0)[None, :]


def perturbation(n, r, alpha, seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((n, r))
    return alpha * D / np.linalg.norm(D)


# ----------------------------------------------------------------------
# stepsize rules
# ----------------------------------------------------------------------

def test_adaptive_stepsize_at_minimum_depends_only_on_curvature():
    # zero gradient, M = 1, spectral norm 1 -> 1/(9 * 1 * 1) = 1/9
    U_star = np.zeros((3, 1))
    U_star[0, 0] = 1.0
    loss = QuadraticLoss(tc.build_from_factors(U_star), scale=0.5)
    eta = adaptive_stepsize(loss, U_star)
    assert abs(eta - 1.0 / 9.0) <= 1e-9


def test_adaptive_stepsize_combines_gradient_and_curvature_terms():
    # unit gradient unfolding and unit factors, M = 1 -> 1/(18 + 9) = 1/27
    obj = ObjectiveSpec(
        value=lambda T: 0.0,
        grad_T=lambda T: tc.outer3([1.0, 0.0, 0.0]),
        m=1.0, M=1.0, r_budget=1,
    )
    U = np.zeros((3, 1))
    U[0, 0] = 1.0
    eta = adaptive_stepsize(obj, U)
    assert abs(eta - 1.0 / 27.0) <= 1e-9


def test_adaptive_stepsize_safety_scales_linearly():
    U = unit_sphere_factors(4, 2, 1)
    loss = QuadraticLoss(tc.build_from_factors(unit_sphere_factors(4, 2, 2)),
                         scale=0.5)
    full = adaptive_stepsize(loss, U)
    half = adaptive_stepsize(loss, U, safety=0.5)
    assert np.isclose(half, 0.5 * full, rtol=1e-12)


def test_adaptive_stepsize_caps_degenerate_case():
    loss = QuadraticLoss(tc.SymTensor3.zeros(3), scale=0.5)
    eta = adaptive_stepsize(loss, np.zeros((3, 1)), eta_max=1.0)
    assert eta == 1.0


def test_constant_stepsize_unit_factors():
    U0 = np.zeros((4, 1))
    U0[0, 0] = 1.0
    loss = QuadraticLoss(tc.SymTensor3.zeros(4), scale=0.5)  # M = 1
    assert abs(constant_stepsize(loss, U0) - 1.0 / 21.6) <= 1e-12


def test_constant_stepsize_scales_with_curvature_and_norm():
    U0 = np.zeros((4, 1))
    U0[0, 0] = 1.0
    double_M = QuadraticLoss(tc.SymTensor3.zeros(4), scale=1.0)  # M = 2
    assert abs(constant_stepsize(double_M, U0) - 1.0 / 43.2) <= 1e-12
    loss = QuadraticLoss(tc.SymTensor3.zeros(4), scale=0.5)
    assert abs(constant_stepsize(loss, 2.0 * U0) - 1.0 / 345.6) <= 1e-12


def test_constant_stepsize_rejects_zero_start():
    loss = QuadraticLoss(tc.SymTensor3.zeros(3), scale=0.5)
    with pytest.raises(ValueError):
        constant_stepsize(loss, np.zeros((3, 2)))


def test_contraction_factor_values():
    assert contraction_factor(0.0, 1.0, 1.0) == 1.0
    assert np.isclose(contraction_factor(1.0 / 21.6, 1.0, 1.0),
                      1.0 - 0.26 / 21.6, rtol=1e-12)
    assert np.isclose(contraction_factor(0.02, 1.0, 1.0), 0.9948, rtol=1e-12)


def test_policy_and_stop_rule_validation():
    with pytest.raises(ValueError):
        StepsizePolicy.fixed(0.0)
    with pytest.raises(ValueError):
        StepsizePolicy(kind="nope")
    with pytest.raises(ValueError):
        StepsizePolicy.adaptive(safety=1.5)
    with pytest.raises(ValueError):
        StopRule(max_iters=-1)
    with pytest.raises(ValueError):
        StopRule(max_iters=10, divergence_cap=0.0)


# ----------------------------------------------------------------------
# single steps
# ----------------------------------------------------------------------

def test_step_with_zero_gradient_is_identity():
    U_star = unit_sphere_factors(4, 2, 3)
    loss = QuadraticLoss(tc.build_from_factors(U_star), scale=0.5)
    out = step(loss, U_star, 0.01)
    assert np.allclose(out, U_star, atol=1e-13)


def test_step_with_zero_stepsize_is_identity():
    U = unit_sphere_factors(4, 2, 5)
    loss = QuadraticLoss(tc.SymTensor3.zeros(4), scale=0.5)
    assert np.array_equal(step(loss, U, 0.0), U)


def test_step_from_warm_start_decreases_distance():
    U_star = unit_sphere_factors(8, 4, 7)
    loss = QuadraticLoss(tc.build_from_factors(U_star), scale=0.5)
    U0 = U_star + perturbation(8, 4, 0.05 * 0.07, 11)
    eta = constant_stepsize(loss, U0)
    d0, _ = dist(U0, U_star)
    d1, _ = dist(step(loss, U0, eta), U_star)
    assert d1 < d0


# ----------------------------------------------------------------------
# full runs
# ----------------------------------------------------------------------

def test_run_at_minimum_stops_immediately():
    U_star = unit_sphere_factors(5, 2, 13)
    loss = QuadraticLoss(tc.build_from_factors(U_star), scale=0.5)
    trace = run(loss, U_star, StepsizePolicy.fixed(0.02), StopRule(max_iters=50))
    assert trace.status == "grad_converged"
    assert len(trace) == 1
    assert trace.iters[0] == 0


def test_run_with_zero_budget_records_initial_metrics_only():
    U = unit_sphere_factors(5, 2, 17)
    gt = make_ground_truth(unit_sphere_factors(5, 2, 19))
    loss = QuadraticLoss(tc.build_from_factors(gt.U_star), scale=0.5)
    trace = run(loss, U, StepsizePolicy.fixed(0.02), StopRule(max_iters=0),
                ground_truth=gt)
    assert len(trace) == 1
    assert trace.status == "max_iters"
    assert np.isfinite(trace.dist_to_truth[0])
    assert np.isfinite(trace.resid_norm[0])


def test_run_iter_column_is_contiguous_from_zero():
    U_star = unit_sphere_factors(6, 3, 23)
    loss = QuadraticLoss(tc.build_from_factors(U_star), scale=0.5)
    U0 = U_star + perturbation(6, 3, 0.05, 29)
    trace = run(loss, U0, StepsizePolicy.fixed(0.02),
                StopRule(max_iters=40, grad_tol=0.0))
    assert trace.status == "max_iters"
    assert np.array_equal(trace.iters, np.arange(41))
    for arr in (trace.grad_norm, trace.resid_norm, trace.stepsize, trace.f):
        assert np.all(np.isfinite(arr))


def test_run_converges_to_ground_truth_from_warm_start():
    gt = make_ground_truth(unit_sphere_factors(16, 8, 31))
    loss = QuadraticLoss(tc.build_from_factors(gt.U_star), scale=0.5)
    U0 = gt.U_star + perturbation(16, 8, 0.07, 37)
    trace = run(loss, U0, StepsizePolicy.fixed(0.02),
                StopRule(max_iters=3500), ground_truth=gt)
    assert trace.status == "grad_converged"
    assert trace.dist_to_truth[-1] <= 1e-9


def test_run_dist_tolerance_stop():
    gt = make_ground_truth(unit_sphere_factors(16, 8, 41))
    loss = QuadraticLoss(tc.build_from_factors(gt.U_star), scale=0.5)
    U0 = gt.U_star + perturbation(16, 8, 0.07, 43)
    trace = run(loss, U0, StepsizePolicy.fixed(0.02),
                StopRule(max_iters=1000, grad_tol=0.0, dist_tol=1e-3),
                ground_truth=gt)
    assert trace.status == "dist_converged"
    assert trace.dist_to_truth[-1] <= 1e-3
    assert len(trace) < 1000


def test_run_flags_divergence_and_keeps_trace_finite():
    gt = make_ground_truth(unit_sphere_factors(6, 3, 47))
    loss = QuadraticLoss(tc.build_from_factors(gt.U_star), scale=1.0)
    U0 = gt.U_star + perturbation(6, 3, 0.5, 53)
    trace = run(loss, U0, StepsizePolicy.fixed(5.0), StopRule(max_iters=200))
    assert trace.status == "diverged"
    assert np.all(np.isfinite(trace.f))
    assert np.all(np.isfinite(trace.grad_norm))


def test_run_is_deterministic():
    gt = make_ground_truth(unit_sphere_factors(8, 4, 59))
    loss = QuadraticLoss(tc.build_from_factors(gt.U_star), scale=0.5)
    U0 = gt.U_star + perturbation(8, 4, 0.05, 61)
    kwargs = dict(policy=StepsizePolicy.adaptive(), stop=StopRule(max_iters=60),
                  ground_truth=gt)
    t1 = run(loss, U0, **kwargs)
    t2 = run(loss, U0, **kwargs)
    assert np.array_equal(t1.grad_norm, t2.grad_norm)
    assert np.array_equal(t1.dist_to_truth, t2.dist_to_truth)
    assert np.array_equal(t1.stepsize, t2.stepsize)
    assert np.array_equal(t1.U_final, t2.U_final)


def test_run_general_objective_matches_quadratic_path():
    gt = make_ground_truth(unit_sphere_factors(5, 2, 67))
    target = tc.build_from_factors(gt.U_star)
    fast = QuadraticLoss(target, scale=0.5)
    slow = ObjectiveSpec(
        value=lambda T: 0.5 * tc.fro_norm(T - target) ** 2,
        grad_T=lambda T: T - target,
        m=1.0, M=1.0, r_budget=2,
    )
    U0 = gt.U_star + perturbation(5, 2, 0.05, 71)
    stop = StopRule(max_iters=30, grad_tol=0.0)
    tf = run(fast, U0, StepsizePolicy.fixed(0.02), stop, ground_truth=gt)
    ts = run(slow, U0, StepsizePolicy.fixed(0.02), stop, ground_truth=gt)
    assert np.allclose(tf.f, ts.f, rtol=1e-10)
    assert np.allclose(tf.grad_norm, ts.grad_norm, rtol=1e-8)
    assert np.allclose(tf.U_final, ts.U_final, rtol=1e-10, atol=1e-12)


# ----------------------------------------------------------------------
# contraction and descent along warm-started runs
# ----------------------------------------------------------------------

@pytest.mark.parametrize("policy", [StepsizePolicy.fixed(0.02),
                                    StepsizePolicy.adaptive(),
                                    StepsizePolicy.constant()])
def test_squared_distance_contracts_per_step_inside_warm_ball(policy):
    gt = make_ground_truth(unit_sphere_factors(64, 32, 73))
    loss = QuadraticLoss(tc.build_from_factors(gt.U_star), scale=0.5)
    U0 = gt.U_star + perturbation(64, 32, 0.07, 79)
    trace = run(loss, U0, policy, StopRule(max_iters=120, grad_tol=0.0),
                ground_truth=gt)
    d2 = trace.dist_to_truth ** 2
    for t in range(len(trace) - 1):
        bound = contraction_factor(trace.stepsize[t], loss.m, gt.c_under)
        assert d2[t + 1] <= bound * d2[t] + 1e-9


def test_loss_descends_monotonically_with_adaptive_stepsize():
    gt = make_ground_truth(unit_sphere_factors(64, 32, 83))
    loss = QuadraticLoss(tc.build_from_factors(gt.U_star), scale=0.5)
    U0 = gt.U_star + perturbation(64, 32, 0.07, 89)
    trace = run(loss, U0, StepsizePolicy.adaptive(),
                StopRule(max_iters=120, grad_tol=0.0), ground_truth=gt)
    f = trace.f
    assert np.all(f[1:] <= f[:-1] * (1 + 1e-12) + 1e-15)
