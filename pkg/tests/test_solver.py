import importlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonconvex_mc.penalty import Kind, Penalty
from nonconvex_mc.solver import (
    CONVERGED,
    MAX_ITERS,
    NUMERICAL_FAILURE,
    IterationTrace,
    ObservedMatrix,
    SolverConfig,
    grad_g,
    initial_point,
    objective,
    pgd_step,
    solve,
    warm_start_nuclear,
)
from nonconvex_mc.svt import full_svd, singular_values, svt

PENALTIES = [Penalty.hard(), Penalty.soft(), Penalty.lq(0.3), Penalty.lq(0.5), Penalty.lq(0.7)]


def _random_problem(seed, m=6, n=6, frac=0.6):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((m, n)) * 3
    mask = rng.random((m, n)) < frac
    mask.flat[0], mask.flat[-1] = True, False
    return ObservedMatrix(Y, mask)


def _decrease_ok(trace, L, slack=1e-10):
    F = np.asarray(trace.objective)
    d2 = trace.step_norms() ** 2
    return np.all(F[1:] <= F[:-1] - 0.5 * (L - 1) * d2 + slack)


# -- ObservedMatrix ------------------------------------------------------


def test_observed_matrix_zeroes_unobserved_entries():
    Y = np.arange(6.0).reshape(2, 3) + 1
    mask = np.array([[True, False, True], [False, False, True]])
    d = ObservedMatrix(Y, mask)
    assert np.array_equal(d.values, np.where(mask, Y, 0))
    with pytest.raises(ValueError):
        d.values[0, 0] = 5


def test_observed_matrix_ignores_nonfinite_unobserved_values():
    Y = np.array([[1.0, np.nan], [np.inf, 2.0]])
    d = ObservedMatrix(Y, np.eye(2, dtype=bool))
    assert np.array_equal(d.values, np.diag([1.0, 2.0]))


@pytest.mark.parametrize("mask", [np.zeros((2, 2), bool), np.ones((2, 2), bool)])
def test_observed_matrix_rejects_empty_or_full_mask(mask):
    with pytest.raises(ValueError):
        ObservedMatrix(np.ones((2, 2)), mask)


def test_observed_matrix_full_mask_on_request():
    d = ObservedMatrix.fully_observed(np.ones((2, 2)))
    assert d.mask.all()


def test_observed_matrix_shape_mismatch():
    with pytest.raises(ValueError):
        ObservedMatrix(np.ones((2, 3)), np.ones((3, 2), bool))


# -- SolverConfig --------------------------------------------------------


@pytest.mark.parametrize("kw", [{"L": 1.0}, {"L": 0.5}, {"lam": 0.0}, {"tol": 0.0}, {"max_iters": 0}, {"init": "bogus"}])
def test_config_validation(kw):
    args = {"penalty": Penalty.soft(), "lam": 1.0} | kw
    with pytest.raises(ValueError):
        SolverConfig(**args)


def test_config_defaults():
    cfg = SolverConfig(Penalty.lq(0.5), 2.0)
    assert cfg.L == 1.1 and cfg.tol == 1e-8 and cfg.max_iters == 5000
    assert cfg.eta == pytest.approx(0.55)
    assert cfg.init_mode == "warm"
    assert SolverConfig(Penalty.hard(), 1.0).init_mode == "warm"
    assert SolverConfig(Penalty.soft(), 1.0).init_mode == "zero"
    assert SolverConfig(Penalty.soft(), 1.0, init=np.zeros((2, 2))).init_mode == "given"


# -- objective and gradient ---------------------------------------------


def test_objective_at_zero():
    d = _random_problem(0)
    cfg = SolverConfig(Penalty.lq(0.5), 3.0)
    assert objective(np.zeros(d.shape), d, cfg) == pytest.approx(0.5 * np.sum(d.values**2), rel=1e-14)


def test_objective_fit_term_vanishes_on_full_noiseless_data():
    rng = np.random.default_rng(1)
    Y = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 5))
    d = ObservedMatrix.fully_observed(Y)
    cfg = SolverConfig(Penalty.lq(0.5), 2.5)
    s = singular_values(Y)[:2]
    assert objective(Y, d, cfg) == pytest.approx(2.5 * np.sum(np.sqrt(s)), rel=1e-12)


@pytest.mark.parametrize("p", PENALTIES, ids=lambda p: p.name)
def test_objective_matches_recomputation(p):
    d = _random_problem(2)
    X = np.random.default_rng(3).standard_normal(d.shape)
    cfg = SolverConfig(p, 0.7)
    f = full_svd(X)
    expected = 0.5 * sum((X[i, j] - d.values[i, j]) ** 2 for i, j in zip(*np.nonzero(d.mask)))
    expected += 0.7 * sum(p.value(float(s)) for s in f.sigma)
    assert objective(X, d, cfg) == pytest.approx(expected, rel=1e-12)


def test_objective_shape_mismatch():
    d = _random_problem(0)
    with pytest.raises(ValueError):
        objective(np.zeros((3, 3)), d, SolverConfig(Penalty.soft(), 1.0))


def test_grad_g_examples():
    d = _random_problem(4)
    assert np.array_equal(grad_g(d.values, d), np.zeros(d.shape))
    assert np.array_equal(grad_g(np.zeros(d.shape), d), -d.values)
    X = np.random.default_rng(5).standard_normal(d.shape)
    expected = np.where(d.mask, X - d.values, 0.0)
    assert np.allclose(grad_g(X, d), expected, atol=0, rtol=0)


# -- one step ------------------------------------------------------------


@pytest.mark.parametrize("p", PENALTIES, ids=lambda p: p.name)
def test_pgd_step_fixed_point(p, rank5_instance):
    _, d = rank5_instance
    cfg = SolverConfig(p, 30.0 if p.kind is not Kind.HARD else 150.0, tol=1e-12, init="zero")
    X, trace = solve(d, cfg)
    assert trace.converged
    assert np.max(np.abs(pgd_step(X, d, cfg) - X)) <= 1e-10


@pytest.mark.parametrize("p", PENALTIES, ids=lambda p: p.name)
def test_pgd_step_below_threshold_gives_zero(p):
    lam, L = 2.0, 1.1
    tau = p.threshold_info(L / lam).tau
    rng = np.random.default_rng(6)
    Y = rng.standard_normal((5, 5))
    # scale so that sigma_max(Y / L) sits at half the threshold
    Y *= 0.5 * tau * L / singular_values(Y)[0]
    d = ObservedMatrix(Y, rng.random((5, 5)) < 0.7)
    assert np.array_equal(pgd_step(np.zeros((5, 5)), d, SolverConfig(p, lam, L=L)), np.zeros((5, 5)))


@settings(max_examples=40)
@given(p=st.sampled_from(PENALTIES), seed=st.integers(0, 10**6), lam=st.floats(0.05, 5), L=st.floats(1.01, 3))
def test_pgd_step_sufficient_decrease(p, seed, lam, L):
    d = _random_problem(seed)
    cfg = SolverConfig(p, lam, L=L)
    X = np.random.default_rng(seed + 1).standard_normal(d.shape)
    X1 = pgd_step(X, d, cfg)
    drop = objective(X, d, cfg) - objective(X1, d, cfg)
    assert drop >= 0.5 * (L - 1) * np.linalg.norm(X1 - X) ** 2 - 1e-10


# -- full solve ----------------------------------------------------------


def test_solve_recovers_noiseless_rank1(rank1_instance):
    M, d = rank1_instance
    X, trace = solve(d, SolverConfig(Penalty.lq(0.5), 1e-3, tol=1e-10))
    assert trace.converged
    assert np.linalg.norm(X - M) / np.linalg.norm(M) < 1e-4


def test_solve_tiny_data_stops_at_zero_after_one_step():
    rng = np.random.default_rng(7)
    lam = 1.0
    tau = Penalty.lq(0.5).threshold_info(1.1 / lam).tau
    Y = rng.standard_normal((6, 6))
    Y *= 0.1 * tau / singular_values(Y)[0]
    d = ObservedMatrix(Y, rng.random((6, 6)) < 0.5)
    X, trace = solve(d, SolverConfig(Penalty.lq(0.5), lam, init="zero"))
    assert np.array_equal(X, np.zeros((6, 6)))
    assert trace.iterations == 1 and trace.converged


def test_solve_full_observation_soft_matches_one_shot_thresholding():
    rng = np.random.default_rng(8)
    Y = rng.standard_normal((7, 5)) * 2
    lam = 1.3
    X, trace = solve(ObservedMatrix.fully_observed(Y), SolverConfig(Penalty.soft(), lam, tol=1e-13))
    assert trace.converged
    assert np.allclose(X, svt(Y, Penalty.soft(), 1 / lam), atol=1e-9)


def test_solve_trace_layout(rank5_instance):
    _, d = rank5_instance
    cfg = SolverConfig(Penalty.lq(0.5), 10.0, init="zero")
    X, trace = solve(d, cfg)
    assert trace.status == CONVERGED and trace.message == ""
    assert len(trace) == trace.iterations + 1
    assert math.isnan(trace.gap[0]) and trace.rank[0] == 0 and trace.sigma_min[0] == 0
    assert trace.objective[0] == pytest.approx(objective(np.zeros(d.shape), d, cfg), rel=1e-14)
    assert trace.objective[-1] == pytest.approx(objective(X, d, cfg), rel=1e-12)
    assert trace.gap[-1] < cfg.tol <= min(trace.gap[1:-1])
    assert all(ms >= 0 for ms in trace.ms)
    assert len(list(trace.rows())) == len(trace)


@pytest.mark.parametrize("p", PENALTIES, ids=lambda p: p.name)
def test_solve_trace_sufficient_decrease_and_jump_bound(p, rank5_instance):
    _, d = rank5_instance
    lam = 150.0 if p.kind is Kind.HARD else 3.0
    cfg = SolverConfig(p, lam)
    X, trace = solve(d, cfg)
    assert _decrease_ok(trace, cfg.L)
    beta = p.threshold_info(cfg.eta).beta
    assert min(s for s, r in zip(trace.sigma_min[1:], trace.rank[1:]) if r > 0) >= beta - 1e-10


def test_solve_max_iters_is_reported(rank5_instance):
    _, d = rank5_instance
    X, trace = solve(d, SolverConfig(Penalty.soft(), 1.0, max_iters=3))
    assert trace.status == MAX_ITERS and trace.iterations == 3
    assert "after 3 iterations" in trace.message
    assert np.all(np.isfinite(X))


def test_solve_numerical_failure_is_reported(monkeypatch, rank5_instance):
    svt_mod = importlib.import_module("nonconvex_mc.svt")
    _, d = rank5_instance
    calls = {"n": 0}
    real = svt_mod.full_svd

    def flaky(A):
        calls["n"] += 1
        if calls["n"] == 4:
            raise np.linalg.LinAlgError("SVD did not converge")
        return real(A)

    monkeypatch.setattr(svt_mod, "full_svd", flaky)
    X, trace = solve(d, SolverConfig(Penalty.soft(), 1.0))
    assert trace.status == NUMERICAL_FAILURE
    assert "iteration 4" in trace.message
    assert trace.iterations == 3
    assert np.all(np.isfinite(X))


def test_solve_is_deterministic(rank5_instance):
    _, d = rank5_instance
    cfg = SolverConfig(Penalty.lq(0.3), 5.0)
    X1, t1 = solve(d, cfg)
    X2, t2 = solve(d, cfg)
    assert np.array_equal(X1, X2)
    assert t1.objective == t2.objective and t1.gap[1:] == t2.gap[1:] and t1.rank == t2.rank


def test_given_init_is_used_and_not_mutated(rank5_instance):
    _, d = rank5_instance
    init = np.full(d.shape, 0.5)
    X, trace = solve(d, SolverConfig(Penalty.soft(), 3.0, init=init, max_iters=2))
    assert np.array_equal(init, np.full(d.shape, 0.5))
    cfg = SolverConfig(Penalty.soft(), 3.0)
    assert trace.objective[0] == pytest.approx(objective(init, d, cfg))


# -- warm start ----------------------------------------------------------


def test_warm_start_is_the_soft_solution(rank5_instance):
    _, d = rank5_instance
    cfg = SolverConfig(Penalty.lq(0.5), 3.0)
    W = warm_start_nuclear(d, cfg)
    X_soft, _ = solve(d, SolverConfig(Penalty.soft(), 3.0, init="zero"))
    assert np.array_equal(W, X_soft)
    assert np.array_equal(initial_point(d, cfg), W)


def test_warm_start_on_zero_data():
    d = ObservedMatrix(np.zeros((4, 4)), np.eye(4, dtype=bool))
    assert np.array_equal(warm_start_nuclear(d, SolverConfig(Penalty.hard(), 1.0)), np.zeros((4, 4)))


def test_warm_start_speeds_up_rank1(rank1_instance):
    _, d = rank1_instance
    lam = 0.05
    _, warm = solve(d, SolverConfig(Penalty.lq(0.5), lam, tol=1e-10, init="warm"))
    _, zero = solve(d, SolverConfig(Penalty.lq(0.5), lam, tol=1e-10, init="zero"))
    assert warm.converged and zero.converged
    assert warm.iterations < zero.iterations


def test_iteration_trace_step_norms():
    tr = IterationTrace(shape=(2, 2))
    tr.append(3.0, math.nan, 0, 0.0, 0.0)
    tr.append(2.0, 0.5, 1, 1.0, 0.1)
    assert np.allclose(tr.step_norms(), [1.0])
    assert tr.iterations == 1 and not tr.converged
