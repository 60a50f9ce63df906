import math

import numpy as np
import pytest

from conftest import random_kernel_matrix, random_survival
from utils.errors import NumericalError, SchemaError, TrainingError
from utils.data_model import FeatureSpec
from utils.kernels import LINEAR, RBF, KernelConfig, fit_kernel, gram
from utils.newton_cg import (
    EXACT,
    OptimizerOptions,
    OptimizerReport,
    TerminationReason,
    cg_solve,
    kernel_cg_solve,
    minimize,
)
from utils.objective import ObjectiveContext, SurvivalProblem, naive_gradient
from utils.pairs import comparable_pairs


class QuadraticProblem:
    """R(beta) = 1/2 beta' A beta, the survival penalty switched off."""

    def __init__(self, A):
        self.A = A
        self.n = A.shape[0]

    def check_trainable(self):
        pass

    def value_and_grad(self, beta):
        g = self.A @ beta
        return 0.5 * float(beta @ g), g

    def hessvec(self, beta, v):
        return self.A @ v


class BrokenProblem(QuadraticProblem):
    def value_and_grad(self, beta):
        return math.nan, np.full(self.n, math.nan)


def _spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def test_cg_identity_is_one_step(rng):
    g = rng.standard_normal(8)
    result = cg_solve(lambda v: v, g)
    assert np.allclose(result.step, -g)
    assert result.iterations == 1


def test_cg_zero_gradient():
    result = cg_solve(lambda v: 2 * v, np.zeros(5))
    assert not result.step.any()
    assert result.iterations == 0


def test_cg_matches_direct_solve(rng):
    A = _spd(rng, 20)
    g = rng.standard_normal(20)
    exact = np.linalg.solve(A, -g)
    tight = cg_solve(lambda v: A @ v, g, OptimizerOptions(cg_forcing=EXACT))
    assert np.allclose(tight.step, exact, rtol=1e-8, atol=1e-10)

    opts = OptimizerOptions()
    loose = cg_solve(lambda v: A @ v, g, opts)
    forcing = opts.forcing_term(float(np.max(np.abs(g))))
    assert np.linalg.norm(A @ loose.step + g) <= forcing * np.linalg.norm(g) * (1 + 1e-12)
    assert loose.relative_residual <= forcing


def test_cg_negative_curvature_falls_back_to_steepest_descent(rng):
    g = rng.standard_normal(4)
    result = cg_solve(lambda v: -v, g)
    assert np.array_equal(result.step, -g)


def _factored_system(rng, n, gamma=0.5):
    K = _spd(rng, n) / n
    B = rng.standard_normal((n, n))
    A = np.eye(n) + gamma * (B @ B.T) @ K
    return K, A


def test_kernel_cg_matches_direct_solve(rng):
    K, A = _factored_system(rng, 20)
    H = K @ A
    c = rng.standard_normal(20)
    g = K @ c
    exact = np.linalg.solve(H, -g)
    result = kernel_cg_solve(lambda p: (H @ p, A @ p), g, c, OptimizerOptions(cg_forcing=EXACT))
    assert np.linalg.norm(result.step - exact) <= 1e-6 * np.linalg.norm(exact)

    opts = OptimizerOptions()
    loose = kernel_cg_solve(lambda p: (H @ p, A @ p), g, c, opts)
    forcing = opts.forcing_term(float(np.max(np.abs(g))))
    assert np.linalg.norm(H @ loose.step + g) <= forcing * np.linalg.norm(g) * (1 + 1e-9)


def test_kernel_cg_negative_curvature_falls_back_to_steepest_descent(rng):
    g = rng.standard_normal(4)
    result = kernel_cg_solve(lambda p: (-p, -p), g, g)
    assert np.array_equal(result.step, -g)


def test_rbf_training_converges(rng):
    n = 150
    X = rng.standard_normal((n, 5))
    specs = tuple(FeatureSpec(f'x{j}') for j in range(5))
    K = gram(fit_kernel(KernelConfig(RBF), X, specs), X).K
    y = rng.exponential(1.0, size=n) + 1e-3
    delta = rng.random(n) < 0.8
    delta[np.argmin(y)] = True
    problem = SurvivalProblem(ObjectiveContext(K, y, delta, 1.0))
    _, report = minimize(problem)
    assert report.converged
    assert report.records[-1].grad_norm <= 1e-5 * max(1.0, report.records[0].grad_norm)


def test_preconditioning_does_not_move_the_minimum(rng):
    n = 30
    K = _spd(rng, n) / n
    y, delta = random_survival(rng, n)
    delta[np.argmin(y)] = True
    y[np.argmax(y)] += 1.0
    problem = SurvivalProblem(ObjectiveContext(K, y, delta, 2.0))
    _, plain = minimize(problem, None, OptimizerOptions(kernel_preconditioning=False))
    _, preconditioned = minimize(problem)
    assert plain.converged and preconditioned.converged
    assert preconditioned.final_objective == pytest.approx(plain.final_objective, rel=1e-6, abs=1e-9)


def test_quadratic_solved_in_one_newton_step(rng):
    A = _spd(rng, 12)
    beta0 = rng.standard_normal(12)
    beta, report = minimize(QuadraticProblem(A), beta0, OptimizerOptions(cg_forcing=EXACT))
    assert np.max(np.abs(beta)) <= 1e-8
    assert report.n_newton == 1
    assert report.termination == TerminationReason.GRADIENT_TOL


def test_three_sample_linear_kernel_descends(three_sample):
    y, delta = three_sample
    K = gram(KernelConfig(LINEAR), np.array([[1.0], [2.0], [3.0]])).K
    beta, report = minimize(SurvivalProblem(ObjectiveContext(K, y, delta, 1.0)))
    assert report.records[0].objective == 1.0
    assert report.final_objective < 1.0


def test_objective_sequence_is_monotone(rng):
    for _ in range(50):
        n = int(rng.integers(3, 40))
        y, delta = random_survival(rng, n)
        if not comparable_pairs(y, delta).pairs.size:
            delta[np.argmin(y)] = True
            y[np.argmax(y)] += 1.0
        K = random_kernel_matrix(rng, n)
        gamma = 2.0 ** int(rng.integers(-6, 7))
        problem = SurvivalProblem(ObjectiveContext(K, y, delta, gamma))
        opts = OptimizerOptions(max_newton=50)
        beta, report = minimize(problem, None, opts)

        values = report.objectives()
        assert np.all(np.diff(values) <= 0.0)
        assert all(rec.step_length > 0 for rec in report.records[1:])
        g0 = report.records[0].grad_norm
        if report.converged:
            assert report.records[-1].grad_norm <= opts.grad_tol * max(1.0, g0)
        else:
            assert report.termination in (TerminationReason.MAX_NEWTON, TerminationReason.LINE_SEARCH_FAILURE)


def test_final_gradient_matches_naive_path(rng):
    n = 30
    y, delta = random_survival(rng, n)
    delta[np.argmin(y)] = True
    y[np.argmax(y)] += 1.0
    K = random_kernel_matrix(rng, n)
    problem = SurvivalProblem(ObjectiveContext(K, y, delta, 2.0))
    beta, _ = minimize(problem)
    _, fast = problem.value_and_grad(beta)
    slow = naive_gradient(K, comparable_pairs(y, delta), beta, 2.0)
    assert np.max(np.abs(fast - slow)) <= 1e-9 * max(1.0, float(np.max(np.abs(slow))))


def test_minimize_is_deterministic(rng):
    y, delta = random_survival(rng, 25)
    delta[np.argmin(y)] = True
    y[np.argmax(y)] += 1.0
    K = random_kernel_matrix(rng, 25)
    ctx = ObjectiveContext(K, y, delta, 0.5)
    beta_a, report_a = minimize(SurvivalProblem(ctx))
    beta_b, report_b = minimize(SurvivalProblem(ctx))
    assert np.array_equal(beta_a, beta_b)
    assert report_a.to_dict() == report_b.to_dict()


def test_empty_pair_set_is_a_training_error():
    problem = SurvivalProblem(ObjectiveContext(np.eye(3), [1.0, 2.0, 3.0], [0, 0, 0], 1.0))
    with pytest.raises(TrainingError):
        minimize(problem)


def test_non_finite_objective_reports_iteration():
    with pytest.raises(NumericalError) as err:
        minimize(BrokenProblem(np.eye(3)))
    assert err.value.iteration == 0
    assert 'Newton iteration 0' in str(err.value)


def test_max_newton_is_reported(rng):
    y, delta = random_survival(rng, 40)
    delta[np.argmin(y)] = True
    y[np.argmax(y)] += 1.0
    problem = SurvivalProblem(ObjectiveContext(random_kernel_matrix(rng, 40), y, delta, 4.0))
    _, report = minimize(problem, None, OptimizerOptions(max_newton=1, grad_tol=1e-15))
    assert not report.converged
    assert report.termination == TerminationReason.MAX_NEWTON
    assert report.n_newton == 1


def test_report_table_and_dict_round_trip(three_sample):
    y, delta = three_sample
    K = gram(KernelConfig(LINEAR), np.array([[1.0], [2.0], [3.0]])).K
    _, report = minimize(SurvivalProblem(ObjectiveContext(K, y, delta, 1.0)))
    frame = report.to_frame()
    assert list(frame.columns) == ['iteration', 'objective', 'grad_norm', 'cg_iterations', 'step_length']
    assert len(frame) == report.n_newton + 1
    assert OptimizerReport.from_dict(report.to_dict()).to_dict() == report.to_dict()


@pytest.mark.parametrize(
    'kwargs',
    [{'backtrack_factor': 1.0}, {'max_newton': 0}, {'grad_tol': 0.0}, {'cg_forcing': 'loose'}, {'max_cg': 0}],
)
def test_invalid_options(kwargs):
    with pytest.raises(SchemaError):
        OptimizerOptions(**kwargs)
