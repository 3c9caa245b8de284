import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monosplit.errors import ConfigurationError, ParameterError
from monosplit.operators import (
    Constants,
    ForwardOracle,
    SplitInclusion,
    linear_forward,
    prox_gallery,
    rotation_forward,
    zero_forward,
)
from monosplit.problems import make_affine_vi, make_rotation, make_split_rotation
from monosplit.splitting import (
    LinesearchParams,
    SolverConfig,
    SplitMix64,
    StepPlan,
    max_stepsize,
    run_baseline,
    run_forb,
    run_forb3,
    run_forb_linesearch,
    run_relaxed_inertial,
    run_stochastic_forb,
)


def cfg(x0, lam, **kw):
    step = lam if isinstance(lam, StepPlan) else StepPlan.constant(lam)
    kw.setdefault("residual_tol", 0.0)
    return SolverConfig(x0=x0, step=step, **kw)


def rotation(n=1):
    return make_rotation(n).inclusion


# ---------------------------------------------------------------- SplitMix64

def test_splitmix64_reference_vectors():
    assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF
    g = SplitMix64(1234567)
    assert [g.next_u64() for _ in range(3)] == [
        6457827717110365317, 3203168211198807973, 9817491932198370423]


def test_splitmix64_randbelow():
    g = SplitMix64(99)
    draws = [g.randbelow(3) for _ in range(3000)]
    assert set(draws) == {0, 1, 2}
    h, ref = SplitMix64(99), SplitMix64(99)
    assert h.randbelow(7) == (ref.next_u64() * 7) >> 64
    with pytest.raises(ParameterError):
        SplitMix64(-1)
    with pytest.raises(ParameterError):
        SplitMix64(2 ** 64)


# ---------------------------------------------------------------- configuration types

def test_step_plan_validation_and_lookup():
    with pytest.raises(ParameterError):
        StepPlan.constant(0.0)
    with pytest.raises(ParameterError):
        StepPlan.from_schedule([0.1, -0.2])
    with pytest.raises(ConfigurationError):
        StepPlan("bogus", lam=1.0)
    plan = StepPlan.from_schedule([0.1, 0.2, 0.3])
    assert plan.steps(5) == [0.1, 0.2, 0.3, 0.3, 0.3]
    assert plan.previous() == 0.1
    assert StepPlan.constant(0.4, lambda_minus1=0.1).previous() == 0.1
    ls = StepPlan.with_linesearch(lambda0=3.0)
    assert ls.previous() == 3.0
    with pytest.raises(ConfigurationError):
        ls.at(0)


def test_linesearch_params_validation():
    assert LinesearchParams(sigma=0.25).rho == 4.0
    assert LinesearchParams(rho_policy="never_increase").rho == 1.0
    for bad in ({"delta": 1.0}, {"sigma": 0.0}, {"lambda0": 0.0}, {"max_backtracks": 0}):
        with pytest.raises(ParameterError):
            LinesearchParams(**bad)
    with pytest.raises(ConfigurationError):
        LinesearchParams(rho_policy="sometimes")


def test_solver_config_validation():
    for bad in ({"alpha": 1.0}, {"alpha": -0.1}, {"beta": 0.0}, {"beta": 1.5},
                {"max_iters": 0}, {"residual_tol": -1.0}, {"seed": -1},
                {"iterate_stride": 0}):
        with pytest.raises(ParameterError):
            cfg([1.0, 0.0], 0.1, **bad)
    c = cfg([1.0, 0.0], 0.1)
    np.testing.assert_array_equal(c.start_previous, [1.0, 0.0])


# ---------------------------------------------------------------- FoRB

def test_forb_with_zero_b_is_proximal_point_halving():
    P = SplitInclusion(prox_gallery("quadratic", {"Q": 1.0, "dim": 1}), zero_forward(1))
    run = run_forb(P, cfg([4.0], 1.0, max_iters=5))
    assert [float(x[0]) for x in run.iterates] == [4.0, 2.0, 1.0, 0.5, 0.25, 0.125]


def test_forb_matches_straight_line_transcription():
    inst = make_affine_vi(seed=7, n=4)
    P, M, q = inst.inclusion, inst.data["M"], inst.data["q"]
    lam = 0.9 / (2 * inst.constants.L)
    run = run_forb(P, cfg(inst.x0, lam, max_iters=3))
    lo, hi = inst.data["lower"], inst.data["upper"]
    xm, x = inst.x0.copy(), inst.x0.copy()
    expected = [x]
    for _ in range(3):
        v = x - 2 * lam * (M @ x + q) + lam * (M @ xm + q)
        xm, x = x, np.clip(v, lo, hi)
        expected.append(x)
    np.testing.assert_allclose(run.iterate_array(), np.vstack(expected), atol=1e-14, rtol=0)


def test_forb_oracle_budget():
    run = run_forb(rotation(), cfg([1.0, 0.0], 0.3, max_iters=37))
    assert run.iterations == 37
    assert run.oracle_calls.resolvent == 37
    assert run.oracle_calls.forward_B == 38
    assert run.forward_trace[0] == 2 and run.resolvent_trace[-1] == 37


def test_forb_converged_status_respects_tolerance():
    run = run_forb(rotation(), SolverConfig(x0=[1.0, 0.0], step=StepPlan.constant(0.45),
                                            residual_tol=1e-9, max_iters=10_000))
    assert run.status == "converged"
    assert run.residuals[-1] <= 1e-9
    assert len(run.residuals) == len(run.lambdas) == run.iterations


def test_forb_structural_errors():
    with pytest.raises(ConfigurationError):
        run_forb(rotation(), cfg([1.0, 0.0], StepPlan.with_linesearch()))
    three = SplitInclusion(prox_gallery("zero", {"dim": 2}), rotation_forward(1),
                           zero_forward(2))
    with pytest.raises(ConfigurationError):
        run_forb(three, cfg([1.0, 0.0], 0.1))


def test_forb_step_warnings():
    run = run_forb(rotation(), cfg([1.0, 0.0], 0.6, max_iters=3))
    assert any("1/(2L)" in w for w in run.warnings)
    ok = run_forb(rotation(), cfg([1.0, 0.0], 0.3, max_iters=3))
    assert ok.warnings == []
    sched = StepPlan.from_schedule([0.3, 0.01], eps_floor=0.05)
    run = run_forb(rotation(), cfg([1.0, 0.0], sched, max_iters=3))
    assert any("outside" in w for w in run.warnings)


def test_forb_schedule_uses_previous_step_in_reflection():
    P = rotation()
    sched = StepPlan.from_schedule([0.1, 0.3, 0.2], lambda_minus1=0.05)
    run = run_forb(P, cfg([1.0, 0.5], sched, x_minus1=[0.0, 1.0], max_iters=3))
    B = P.B
    xs = [np.array([0.0, 1.0]), np.array([1.0, 0.5])]
    lams = [0.05, 0.1, 0.3, 0.2]
    for k in range(3):
        x, xm = xs[-1], xs[-2]
        xs.append(x - lams[k + 1] * B(x) - lams[k] * (B(x) - B(xm)))
    np.testing.assert_allclose(run.iterate_array(), np.vstack(xs[1:]), atol=1e-15)


def test_divergence_is_reported():
    run = run_forb(rotation(), cfg([1.0, 0.0], 2.0, max_iters=10_000))
    assert run.status == "diverged"
    assert run.iterations < 10_000


def test_nonfinite_oracle_output_reports_divergence():
    boom = ForwardOracle(1, lambda x: x * np.inf if abs(x[0]) < 0.5 else x)
    P = SplitInclusion(prox_gallery("zero", {"dim": 1}), boom)
    run = run_forb(P, cfg([1.0], 0.4, max_iters=50))
    assert run.status == "diverged"
    assert math.isinf(run.residuals[-1])


def test_runs_are_deterministic():
    inst = make_affine_vi(seed=2, n=5)
    c = cfg(inst.x0, 0.05, max_iters=200)
    a, b = run_forb(inst.inclusion, c), run_forb(inst.inclusion, c)
    assert a.iterate_array().tobytes() == b.iterate_array().tobytes()
    assert a.residuals == b.residuals


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(0.05, 5.0), st.floats(-100, 100))
def test_forb_with_zero_b_equals_ppa_property(q, lam, x0):
    A = prox_gallery("quadratic", {"Q": q, "dim": 1})
    P = SplitInclusion(A, zero_forward(1))
    a = run_forb(P, cfg([x0], lam, max_iters=20))
    b = run_baseline("proximal_point", P, cfg([x0], lam, max_iters=20))
    np.testing.assert_array_equal(a.iterate_array(), b.iterate_array())


# ---------------------------------------------------------------- linesearch

def test_linesearch_accepts_immediately_when_step_is_safe():
    # B is 1-Lipschitz and lam0 * L = 0.4 <= delta / 2 = 0.45
    run = run_forb_linesearch(rotation(), cfg(
        [1.0, 0.0], StepPlan.with_linesearch(lambda0=0.4, rho_policy="never_increase"),
        max_iters=50))
    assert run.backtracks == [0] * 50
    assert set(run.lambdas) == {0.4}


def brute_force_backtracks(B, x0, lam0, delta, sigma, rho, iters):
    """Independent re-derivation of the backtracking index for A = 0."""
    x_prev, x = np.array(x0, float), np.array(x0, float)
    lam_prev, out = lam0, []
    for k in range(iters):
        base = lam0 if k == 0 else rho * lam_prev
        for i in range(200):
            lam = base * sigma ** i
            x_new = x - lam * B(x) - lam_prev * (B(x) - B(x_prev))
            lhs = lam * np.linalg.norm(B(x_new) - B(x))
            if lhs <= delta / 2 * np.linalg.norm(x_new - x):
                break
        out.append(i)
        x_prev, x, lam_prev = x, x_new, lam
    return out


def test_linesearch_affine_backtrack_index():
    P = SplitInclusion(prox_gallery("zero", {"dim": 1}), linear_forward([[10.0]]))
    plan = StepPlan.with_linesearch(lambda0=1.0, delta=0.5, sigma=0.5,
                                    rho_policy="never_increase")
    run = run_forb_linesearch(P, cfg([1.0], plan, max_iters=1))
    assert run.backtracks == [6]
    assert run.lambdas[0] == 2.0 ** -6
    oracle = brute_force_backtracks(P.B, [1.0], 1.0, 0.5, 0.5, 1.0, 1)
    assert oracle == [6]


def test_linesearch_matches_enumeration_on_random_affine_problem():
    rng = np.random.default_rng(17)
    G = rng.standard_normal((4, 4))
    M = (G - G.T) + 0.3 * G.T @ G
    P = SplitInclusion(prox_gallery("zero", {"dim": 4}), linear_forward(M))
    x0 = rng.standard_normal(4)
    plan = StepPlan.with_linesearch(lambda0=5.0, delta=0.8, sigma=0.6)
    run = run_forb_linesearch(P, cfg(x0, plan, max_iters=40))
    expected = brute_force_backtracks(P.B, x0, 5.0, 0.8, 0.6, 1 / 0.6, run.iterations)
    assert run.backtracks == expected


def test_linesearch_accepted_steps_satisfy_test():
    inst = make_affine_vi(seed=3, n=6)
    plan = StepPlan.with_linesearch(lambda0=2.0)
    run = run_forb_linesearch(inst.inclusion, cfg(inst.x0, plan, max_iters=300))
    X = run.iterate_array()
    B = inst.inclusion.B
    for k, lam in enumerate(run.lambdas):
        lhs = lam * np.linalg.norm(B(X[k + 1]) - B(X[k]))
        assert lhs <= 0.45 * np.linalg.norm(X[k + 1] - X[k]) + 1e-12


def test_linesearch_failure_status():
    B = ForwardOracle(1, lambda x: x ** 3)
    P = SplitInclusion(prox_gallery("zero", {"dim": 1}), B)
    plan = StepPlan.with_linesearch(lambda0=10.0, max_backtracks=2)
    run = run_forb_linesearch(P, cfg([1.0], plan, max_iters=10))
    assert run.status == "linesearch_failed"
    with pytest.raises(ConfigurationError):
        run_forb_linesearch(P, cfg([1.0], 0.1))


# ---------------------------------------------------------------- relaxed inertial

def test_relaxed_inertial_reduces_to_forb():
    inst = make_affine_vi(seed=4, n=5)
    c = cfg(inst.x0, 0.07, max_iters=100)
    a = run_relaxed_inertial(inst.inclusion, c)
    b = run_forb(inst.inclusion, c)
    np.testing.assert_array_equal(a.iterate_array(), b.iterate_array())


def test_relaxed_inertial_hand_rolled_two_steps():
    P = SplitInclusion(prox_gallery("quadratic", {"Q": 1.0, "dim": 1}), zero_forward(1))
    run = run_relaxed_inertial(P, cfg([1.0], 1.0, alpha=0.3, max_iters=2))
    xs = [float(x[0]) for x in run.iterates]
    assert xs[1] == pytest.approx(0.5, abs=1e-15)
    assert xs[2] == pytest.approx(0.175, abs=1e-15)


def test_relaxed_inertial_with_relaxation_matches_loop():
    inst = make_affine_vi(seed=6, n=3)
    P = inst.inclusion
    lam, a, b = 0.03, 0.1, 0.7
    run = run_relaxed_inertial(P, cfg(inst.x0, lam, alpha=a, beta=b, max_iters=25))
    xm, x = inst.x0.copy(), inst.x0.copy()
    zs, xs = [], [x]
    for _ in range(25):
        z = P.A(lam, x - lam * P.B(x) - lam / b * (P.B(x) - P.B(xm)) + a / b * (x - xm))
        xm, x = x, (1 - b) * x + b * z
        zs.append(z)
        xs.append(x)
    np.testing.assert_allclose(run.iterate_array(), np.vstack(xs), atol=1e-13)
    np.testing.assert_allclose(np.vstack(run.aux_iterates), np.vstack(zs), atol=1e-13)
    assert len(run.aux_residuals) == run.iterations


def test_relaxed_inertial_warns_above_bound():
    run = run_relaxed_inertial(rotation(), cfg([1.0, 0.0], 0.25, alpha=0.2, max_iters=5))
    # Lipschitz bound at alpha = 0.2, beta = 1 is 0.2 / L
    assert any("admissible bound" in w for w in run.warnings)


def test_relaxed_inertial_flags_lprime_branch():
    P = SplitInclusion(prox_gallery("zero", {"dim": 2}),
                       linear_forward(np.eye(2), cocoercivity=1.0, lipschitz=1.0))
    quiet = run_relaxed_inertial(P, cfg([1.0, 0.0], 0.5, alpha=0.2, max_iters=3))
    assert not any("L/2" in w for w in quiet.warnings)
    loud = run_relaxed_inertial(P, cfg([1.0, 0.0], 0.5, alpha=0.3, max_iters=3))
    assert any("exceeds L/2" in w for w in loud.warnings)


# ---------------------------------------------------------------- three operators

def three_op(B, C):
    return SplitInclusion(prox_gallery("box_indicator", {"lower": -2.0, "upper": 2.0, "dim": 2}),
                          B, C)


def test_forb3_with_zero_c_equals_forb():
    P3 = three_op(rotation_forward(1, 1.5), zero_forward(2))
    P2 = SplitInclusion(P3.A, P3.B)
    c = cfg([1.5, -0.3], 0.2, max_iters=60)
    np.testing.assert_array_equal(run_forb3(P3, c).iterate_array(),
                                  run_forb(P2, c).iterate_array())


def test_forb3_with_zero_b_equals_forward_backward():
    C = linear_forward(np.array([[2.0, 0.5], [0.5, 1.0]]), [1.0, -4.0])
    P3 = three_op(zero_forward(2), C)
    c = cfg([1.5, -0.3], 0.3, max_iters=60)
    np.testing.assert_array_equal(run_forb3(P3, c).iterate_array(),
                                  run_baseline("forward_backward", P3, c).iterate_array())


def test_forb3_oracle_budget_and_warning():
    C = linear_forward(np.array([[2.0, 0.0], [0.0, 1.0]]))
    P = SplitInclusion(three_op(rotation_forward(1), C).A, rotation_forward(1), C,
                       constants=Constants(L1=1.0, L2=2.0))
    run = run_forb3(P, cfg([1.0, 1.0], 0.3, max_iters=20))
    calls = run.oracle_calls
    assert (calls.forward_B, calls.forward_C, calls.resolvent) == (21, 20, 20)
    assert run.warnings == []
    late = run_forb3(P, cfg([1.0, 1.0], 1 / 3, max_iters=2))
    assert any("2/(4 L1 + L2)" in w for w in late.warnings)
    with pytest.raises(ConfigurationError):
        run_forb3(rotation(), cfg([1.0, 0.0], 0.1))


# ---------------------------------------------------------------- stochastic

def test_stochastic_single_part_equals_forb():
    inst = make_affine_vi(seed=8, n=4)
    c = cfg(inst.x0, 0.05, max_iters=80, seed=5)
    a = run_stochastic_forb(inst.inclusion, [inst.inclusion.B], c)
    b = run_forb(inst.inclusion, c)
    np.testing.assert_array_equal(a.iterate_array(), b.iterate_array())
    assert a.oracle_calls.forward_Bi == 160


def test_stochastic_indices_follow_splitmix():
    inst = make_split_rotation(1)
    run = run_stochastic_forb(inst.inclusion, inst.parts, cfg(inst.x0, 0.2, max_iters=50,
                                                               seed=77))
    g = SplitMix64(77)
    assert run.indices == [g.randbelow(2) for _ in range(50)]
    again = run_stochastic_forb(inst.inclusion, inst.parts, cfg(inst.x0, 0.2, max_iters=50,
                                                                 seed=77))
    assert run.iterate_array().tobytes() == again.iterate_array().tobytes()


def test_stochastic_errors_and_warnings():
    inst = make_split_rotation(1)
    with pytest.raises(ConfigurationError):
        run_stochastic_forb(inst.inclusion, [], cfg(inst.x0, 0.2))
    # parts that do not average to B are reported, not rescaled
    run = run_stochastic_forb(inst.inclusion, [inst.parts[0]], cfg(inst.x0, 0.2, max_iters=3))
    assert any("average" in w for w in run.warnings)


# ---------------------------------------------------------------- baselines

def test_tseng_rotation_ratio_is_exact():
    lam = 1 / math.sqrt(2)
    run = run_baseline("tseng", rotation(), cfg([1.0, 0.0], lam, max_iters=60))
    norms = np.linalg.norm(run.iterate_array(), axis=1)
    np.testing.assert_allclose(norms[1:] / norms[:-1], math.sqrt(3) / 2, atol=1e-12)
    assert run.oracle_calls.forward_B == 120


def test_forward_backward_rotation_growth():
    lam = 0.3
    run = run_baseline("forward_backward", rotation(), cfg([1.0, 0.0], lam, max_iters=5000))
    assert run.status == "diverged"
    norms = np.linalg.norm(run.iterate_array(), axis=1)
    np.testing.assert_allclose(norms[1:] / norms[:-1], math.sqrt(1 + lam ** 2), rtol=1e-12)


def test_baseline_preconditions():
    box = prox_gallery("box_indicator", {"lower": -1.0, "upper": 1.0, "dim": 2})
    l1 = prox_gallery("l1_norm", {"dim": 2})
    with pytest.raises(ConfigurationError):
        run_baseline("proximal_point", rotation(), cfg([1.0, 0.0], 0.1))
    with pytest.raises(ConfigurationError):
        run_baseline("projected_reflected_gradient", SplitInclusion(l1, rotation_forward(1)),
                     cfg([1.0, 0.0], 0.1))
    with pytest.raises(ConfigurationError):
        run_baseline("popov", SplitInclusion(box, rotation_forward(1)), cfg([1.0, 0.0], 0.1))
    with pytest.raises(ConfigurationError):
        run_baseline("popov", rotation(), cfg([1.0, 0.0], StepPlan.from_schedule([0.1, 0.2])))
    with pytest.raises(ConfigurationError):
        run_baseline("extragradient", rotation(), cfg([1.0, 0.0], 0.1))


def test_popov_matches_forb():
    P, lam = rotation(), 0.2
    c = cfg([1.0, 0.0], lam, x_minus1=[0.3, -0.4], max_iters=100)
    popov = run_baseline("popov", P, c)
    forb = run_forb(P, c)
    np.testing.assert_allclose(popov.iterate_array(), forb.iterate_array(), atol=1e-12, rtol=0)
    # y_k = x_k + lam B(x_{k-1})
    X = forb.iterate_array()
    Y = np.vstack([X[k] + lam * P.B(X[k - 1]) for k in range(1, len(X))])
    np.testing.assert_allclose(np.vstack(popov.aux_iterates), Y, atol=1e-12, rtol=0)


def test_projected_reflected_gradient_change_of_variables():
    P, lam = rotation(), 0.2
    xbar0, xbar_m1 = np.array([1.0, 0.0]), np.array([0.5, 0.5])
    forb = run_forb(P, cfg(xbar0, lam, x_minus1=xbar_m1, max_iters=100))
    # PRG start with 2 x_0 - x_{-1} = xbar_0 and x_0 - x_{-1} = lam B(xbar_{-1})
    b = P.B(xbar_m1)
    x0, xm1 = xbar0 + lam * b, xbar0 + 2 * lam * b
    prg = run_baseline("projected_reflected_gradient", P,
                       cfg(x0, lam, x_minus1=xm1, max_iters=100))
    X = np.vstack([xm1, prg.iterate_array()])
    xbar = 2 * X[1:] - X[:-1]
    np.testing.assert_allclose(xbar, forb.iterate_array(), atol=1e-12, rtol=0)


def test_projected_reflected_gradient_equals_forb_for_affine_vi():
    inst = make_affine_vi(seed=10, n=4)
    c = cfg(inst.x0, 0.9 / (2 * inst.constants.L), max_iters=200)
    a = run_baseline("projected_reflected_gradient", inst.inclusion, c)
    b = run_forb(inst.inclusion, c)
    np.testing.assert_allclose(a.iterate_array(), b.iterate_array(), atol=1e-12)


# ---------------------------------------------------------------- step-size bounds

def test_max_stepsize_examples():
    assert max_stepsize("forb", Constants(L=2.0)) == 0.25
    assert max_stepsize("relaxed_inertial", Constants(L=1.0)) == 0.5
    assert max_stepsize("relaxed_inertial", Constants(L=1.0), alpha=0.2,
                        op_class="cocoercive") == pytest.approx(0.6, abs=1e-15)
    assert max_stepsize("forb3", Constants(L1=1.0, L2=2.0)) == pytest.approx(1 / 3, abs=1e-15)
    assert max_stepsize("forb3", Constants(L1=1.0, L2=2.0)) > 1 / (2 * (1.0 + 2.0))
    assert max_stepsize("tseng", Constants(L=4.0)) == 0.25
    assert max_stepsize("forward_backward", Constants(L=4.0), op_class="cocoercive") == 0.5
    assert max_stepsize("forward_backward", Constants(L=4.0)) == 0.0
    assert max_stepsize("proximal_point", Constants()) == math.inf
    assert max_stepsize("forb", Constants(L=0.0)) == math.inf


def test_max_stepsize_errors():
    with pytest.raises(ConfigurationError):
        max_stepsize("forb", Constants())
    with pytest.raises(ConfigurationError):
        max_stepsize("forb3", Constants(L1=1.0))
    with pytest.raises(ConfigurationError):
        max_stepsize("nope", Constants(L=1.0))
    with pytest.raises(ConfigurationError):
        max_stepsize("forb", Constants(L=1.0), op_class="strongly")
    with pytest.raises(ParameterError):
        max_stepsize("relaxed_inertial", Constants(L=1.0), alpha=1.2)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 0.999), st.floats(0.01, 1.0), st.floats(0.1, 10.0))
def test_relaxed_bounds_properties(alpha, beta, L):
    lip = max_stepsize("relaxed_inertial", Constants(L=L), alpha, beta, "lipschitz")
    coc = max_stepsize("relaxed_inertial", Constants(L=L), alpha, beta, "cocoercive")
    assert lip >= 0 and coc >= 0
    # cocoercivity never shrinks the admissible range
    assert coc >= lip or coc == 0.0
    # the bound scales like 1/L
    lip1 = max_stepsize("relaxed_inertial", Constants(L=1.0), alpha, beta, "lipschitz")
    assert lip == pytest.approx(lip1 / L, rel=1e-12, abs=1e-300)
