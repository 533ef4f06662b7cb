import itertools
from types import SimpleNamespace
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from Certmpc.dynamics.tasks import benchmark_task, in_unsafe
from Certmpc.exceptions import ContractViolationError, SolverFailureError
from Certmpc.neural.networks import Certificate, Mlp, Policy
from .rollout import rollout, simulate
from .solver import (
    CONVERGED, FALLBACK, CertificateTerminal, OcpProblem, PointTerminal, SolverConfig, WarmStart,
    cold_start, make_warm_start, mpc_step, solve,
)


def quadratic_certificate(task, scale=0.1, level=1e6):
    """V(x) = scale^2 |x - x_F|^2 as a single affine layer"""
    weights = scale * np.eye(3)
    return Certificate(Mlp([3, 3], [weights], [-weights @ task.goal]), level)


def zero_policy(task):
    return Policy(Mlp.zeros([3, 4, 2]), task.input_lower, task.input_upper)


class RolloutTestCase(SimpleTestCase):
    """Test cases for single-shooting rollouts"""

    def setUp(self):
        self.task = benchmark_task()
        self.terminal = CertificateTerminal(quadratic_certificate(self.task))

    def test_equilibrium_objective(self):
        """Test only the terminal term remains at the goal"""
        result = rollout(self.task, self.terminal, self.task.goal, np.zeros((15, 2)), time=4, normalize=False)
        self.assertEqual(result.objective, 0.0)
        np.testing.assert_allclose(result.states, np.tile(self.task.goal, (16, 1)))

    def test_single_step_composition(self):
        result = rollout(self.task, self.terminal, [0.0, 0.0, 0.0], [[2.0, 0.0]], time=2, normalize=False)
        np.testing.assert_allclose(result.states[-1], [0.2, 0.0, 0.0])
        stage = 1e-3 * 36.0
        terminal = 0.01 * 5.8 ** 2
        self.assertAlmostEqual(result.objective, 0.8 ** 2 * stage + 0.8 ** 3 * terminal)

    def test_normalized_weights_drop_common_factor(self):
        inputs = np.tile([1.0, 0.2], (5, 1))
        absolute = rollout(self.task, self.terminal, [-3.0, 2.0, 0.0], inputs, time=3, normalize=False)
        shifted = rollout(self.task, self.terminal, [-3.0, 2.0, 0.0], inputs, time=3, normalize=True)
        self.assertAlmostEqual(absolute.objective, 0.8 ** 3 * shifted.objective)

    def test_gradient_matches_finite_differences(self):
        """Test the adjoint gradient on random certificates and inputs"""
        rng = np.random.default_rng(0)
        h = 1e-6
        for _ in range(100):
            cert = Certificate.initialize(3, [6], 2, 7.0, rng)
            terminal = CertificateTerminal(cert)
            horizon = int(rng.integers(1, 6))
            x0 = rng.uniform([-6, -6, -3], [6, 6, 3])
            inputs = rng.uniform(self.task.input_lower, self.task.input_upper, size=(horizon, 2))
            numeric = np.zeros_like(inputs)
            for k, j in itertools.product(range(horizon), range(2)):
                step = np.zeros_like(inputs)
                step[k, j] = h
                plus = rollout(self.task, terminal, x0, inputs + step, time=0, normalize=False).objective
                minus = rollout(self.task, terminal, x0, inputs - step, time=0, normalize=False).objective
                numeric[k, j] = (plus - minus) / (2 * h)
            analytic = rollout(self.task, terminal, x0, inputs, time=0, normalize=False).gradient
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_non_finite_state(self):
        with self.assertRaises(SolverFailureError) as ctx:
            simulate(self.task, [0.0, 0.0, np.nan], [[1.0, 0.0]])
        self.assertEqual(ctx.exception.details['step'], 1)

    def test_input_dimension(self):
        with self.assertRaises(ContractViolationError):
            simulate(self.task, [0.0, 0.0, 0.0], [[1.0, 0.0, 0.0]])


class SolveTestCase(SimpleTestCase):
    """Test cases for the augmented-Lagrangian solver"""

    def setUp(self):
        self.task = benchmark_task()
        self.cert = quadratic_certificate(self.task)
        self.policy = zero_policy(self.task)

    def problem(self, state, horizon=None, cert=None, **config):
        return OcpProblem(self.task, CertificateTerminal(cert or self.cert), state,
                          horizon=horizon, config=SolverConfig(**config))

    def test_goal_is_optimal(self):
        problem = self.problem(self.task.goal)
        solution = solve(problem, cold_start(self.task, self.policy, self.task.goal))
        self.assertLessEqual(solution.objective, 1e-6)
        np.testing.assert_allclose(solution.inputs, 0.0, atol=5e-2)

    def test_refines_grid_optimum(self):
        """Test cold-started N=2 solutions never lose to a 9x9 input grid per step"""
        rng = np.random.default_rng(1)
        speeds = np.linspace(self.task.input_lower[0], self.task.input_upper[0], 9)
        turns = np.linspace(self.task.input_lower[1], self.task.input_upper[1], 9)
        per_step = np.array(list(itertools.product(speeds, turns)))
        pairs = np.array([(a, b) for a in range(len(per_step)) for b in range(len(per_step))])
        first, second = per_step[pairs[:, 0]], per_step[pairs[:, 1]]
        checked = 0
        while checked < 20:
            state = rng.uniform([-7, -7, -3], [7, 7, 3])
            if np.linalg.norm(state[:2]) < 1.1:
                continue
            checked += 1
            starts = np.tile(state, (len(pairs), 1))
            x1 = self.task.dynamics(starts, first)
            x2 = self.task.dynamics(x1, second)
            objective = (self.task.stage_cost(starts, first) + 0.8 * self.task.stage_cost(x1, second)
                         + 0.64 * self.cert.values(x2))
            feasible = (np.linalg.norm(x1[:, :2], axis=1) >= 1.01) & ~in_unsafe(self.task, x1)
            best = int(np.argmin(np.where(feasible, objective, np.inf)))
            solution = solve(self.problem(state, horizon=2), cold_start(self.task, self.policy, state, 2))
            self.assertNotEqual(solution.status, FALLBACK)
            self.assertLessEqual(solution.objective, objective[best] + 1e-4)

    def test_converged_solution_residuals(self):
        """Test a step from the start state meets every residual bound"""
        cert = quadratic_certificate(self.task, level=1.5)
        problem = self.problem(self.task.start, cert=cert)
        solution = solve(problem, cold_start(self.task, self.policy, self.task.start))
        if solution.status == CONVERGED:
            self.assertLessEqual(solution.residuals['obstacle'], 1e-6)
            self.assertLessEqual(solution.residuals['terminal'], 1e-6)
        self.assertLessEqual(solution.residuals['input_box'], 0.0)
        self.assertFalse(np.any(in_unsafe(self.task, solution.predicted[:-1])))

    def test_obstacle_is_avoided(self):
        """Test predicted states stay outside the tightened obstacle"""
        state = np.array([-2.0, 0.05, 0.0])
        warm = WarmStart(np.tile([0.0, 0.0], (15, 1)))
        solution = solve(self.problem(state), warm)
        distance = np.linalg.norm(solution.predicted[:-1, :2], axis=1)
        self.assertTrue(np.all(distance >= 1.01 - 1e-6))

    def test_deterministic(self):
        state = np.array([-4.0, 1.5, 0.3])
        warm = cold_start(self.task, self.policy, state)
        first = solve(self.problem(state), warm)
        second = solve(self.problem(state), warm)
        np.testing.assert_array_equal(first.inputs, second.inputs)
        self.assertEqual(first.objective, second.objective)

    def test_time_normalization_keeps_argmin(self):
        state = np.array([-4.0, 3.0, 0.0])
        warm = cold_start(self.task, self.policy, state)
        normalized = solve(OcpProblem(self.task, CertificateTerminal(self.cert), state, time=5,
                                      config=SolverConfig(normalize_discount=True)), warm)
        absolute = solve(OcpProblem(self.task, CertificateTerminal(self.cert), state, time=5,
                                    config=SolverConfig(normalize_discount=False)), warm)
        self.assertAlmostEqual(absolute.objective / 0.8 ** 5, normalized.objective, delta=1e-3 * normalized.objective)

    def test_point_terminal_reaches_target(self):
        """Test the terminal equality pins x_N to a reachable target"""
        target = self.task.dynamics(np.array([[3.0, 3.0, 0.0]]), np.array([[1.0, 0.0]]))[0]
        for _ in range(4):
            target = self.task.dynamics(target[None, :], np.array([[1.0, 0.0]]))[0]
        problem = OcpProblem(self.task, PointTerminal(target, 2.5), [3.0, 3.0, 0.0], horizon=5)
        solution = solve(problem, WarmStart(np.tile([0.5, 0.0], (5, 1))))
        np.testing.assert_allclose(solution.terminal_state, target, atol=1e-4)
        self.assertGreaterEqual(solution.objective, 2.5 * 0.8 ** 5)

    def test_fallback_to_warm_start(self):
        """Test an infeasible inner result returns the warm start"""
        state = np.array([-1.6, 0.0, 0.0])
        warm = WarmStart(np.zeros((15, 2)))
        crash = SimpleNamespace(x=np.tile([2.0, 0.0], 15), nit=1)
        with mock.patch('Certmpc.ocp.solver.minimize', return_value=crash):
            with self.assertLogs('Certmpc.ocp.solver', level='WARNING'):
                solution = solve(self.problem(state), warm)
        self.assertEqual(solution.status, FALLBACK)
        np.testing.assert_array_equal(solution.inputs, warm.inputs)

    def test_infeasible_warm_start_raises(self):
        state = np.array([-1.6, 0.0, 0.0])
        crash = SimpleNamespace(x=np.tile([2.0, 0.0], 15), nit=1)
        with mock.patch('Certmpc.ocp.solver.minimize', return_value=crash):
            with self.assertRaises(SolverFailureError):
                solve(self.problem(state), WarmStart(np.tile([2.0, 0.0], (15, 1))))

    def test_wrong_horizon(self):
        with self.assertRaises(ContractViolationError):
            solve(self.problem(self.task.start), WarmStart(np.zeros((3, 2))))


class WarmStartTestCase(SimpleTestCase):
    """Test cases for warm starts and receding-horizon steps"""

    def setUp(self):
        self.task = benchmark_task()
        self.policy = Policy.initialize(3, [8], self.task.input_lower, self.task.input_upper,
                                        np.random.default_rng(2))

    def test_shift_appends_policy_action(self):
        inputs = np.array([[0.1, 0.0], [0.2, 0.1], [0.3, -0.1]])
        states = simulate(self.task, [-5.0, 1.0, 0.0], inputs)
        previous = SimpleNamespace(inputs=inputs, terminal_state=states[-1], status=CONVERGED)
        warm = make_warm_start(previous, self.policy, self.task)
        np.testing.assert_array_equal(warm.inputs[:2], inputs[1:])
        np.testing.assert_allclose(warm.inputs[2], self.policy.actions(states[-1][None, :])[0])
        self.assertTrue(np.all(warm.tail_action >= self.task.input_lower))
        self.assertTrue(np.all(warm.tail_action <= self.task.input_upper))

    def test_mpc_step_at_goal(self):
        problem = OcpProblem(self.task, CertificateTerminal(quadratic_certificate(self.task)), self.task.goal)
        applied, warm, solution = mpc_step(problem, cold_start(self.task, self.policy, self.task.goal), self.policy)
        np.testing.assert_allclose(applied, 0.0, atol=5e-2)
        self.assertEqual(len(warm.inputs), self.task.horizon)
        self.assertGreaterEqual(solution.wall_time_ms, 0.0)

    def test_mpc_step_fallback_applies_first_warm_input(self):
        problem = OcpProblem(self.task, CertificateTerminal(quadratic_certificate(self.task)), [-1.6, 0.0, 0.0])
        warm = WarmStart(np.vstack([[0.0, 0.3], np.zeros((14, 2))]))
        crash = SimpleNamespace(x=np.tile([2.0, 0.0], 15), nit=1)
        with mock.patch('Certmpc.ocp.solver.minimize', return_value=crash):
            applied, _, solution = mpc_step(problem, warm, self.policy)
        self.assertEqual(solution.status, FALLBACK)
        np.testing.assert_array_equal(applied, [0.0, 0.3])
