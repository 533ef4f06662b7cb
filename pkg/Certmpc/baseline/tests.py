import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from Certmpc.certificates.datasets import AUXILIARY, Trajectory, TrajectoryDataset
from Certmpc.dynamics.tasks import benchmark_task, in_unsafe
from Certmpc.exceptions import ContractViolationError
from Certmpc.iterations.config import RunConfig
from Certmpc.iterations.initial import initial_dataset
from Certmpc.iterations.orchestrator import initial_report
from Certmpc.ocp.solver import FALLBACK, SolverConfig
from .lmpc import BASELINE, baseline_run, baseline_solve, recorded_warm_start
from .safe_set import SampledSafeSet


def straight_trajectory(task, start=1.0, steps=50, speed=1.0, iteration=0):
    inputs = np.tile([speed, 0.0], (steps, 1))
    states = [np.array([start, 0.0, 0.0])]
    for u in inputs:
        states.append(task.dynamics(states[-1][None, :], u[None, :])[0])
    return Trajectory.from_run(task, iteration, np.array(states), inputs)


class SampledSafeSetTestCase(SimpleTestCase):
    """Test cases for the sampled safe set"""

    def setUp(self):
        self.task = benchmark_task(obstacles=[])
        self.trajectory = straight_trajectory(self.task)

    def test_points_and_successors(self):
        safe_set = SampledSafeSet.from_dataset(TrajectoryDataset((self.trajectory,)))
        self.assertEqual(len(safe_set), 51)
        np.testing.assert_allclose(safe_set.cost_to_go, self.trajectory.cost_to_go)
        np.testing.assert_allclose(safe_set.successors[0], self.trajectory.states[1])
        np.testing.assert_allclose(safe_set.successor_inputs[-1], [0.0, 0.0])
        np.testing.assert_allclose(safe_set.successors[-1], safe_set.states[-1])

    def test_auxiliary_samples_excluded(self):
        auxiliary = Trajectory.from_run(self.task, 0, [[0.0, 3.0, 0.0], [0.5, 3.0, 0.0]], [[0.0, 0.0]],
                                        kind=AUXILIARY)
        safe_set = SampledSafeSet.from_dataset(TrajectoryDataset((self.trajectory, auxiliary)))
        self.assertEqual(len(safe_set), 51)

    def test_duplicates_keep_cheapest(self):
        """Test a state revisited by a cheaper suffix takes the lower cost-to-go"""
        first = SampledSafeSet.from_dataset(TrajectoryDataset((self.trajectory,)))
        shorter = Trajectory.from_run(self.task, 1, self.trajectory.states[-2:], self.trajectory.inputs[-1:])
        cheaper = Trajectory(1, shorter.states, shorter.inputs, shorter.cost_to_go - 1.0)
        grown = first.updated(cheaper)
        self.assertEqual(len(grown), len(first))
        self.assertEqual(grown.iteration, 1)
        self.assertAlmostEqual(grown.cost_to_go[-1], first.cost_to_go[-1] - 1.0)
        self.assertTrue(np.all(grown.cost_to_go <= first.cost_to_go))

    def test_grows_monotonically(self):
        first = SampledSafeSet.from_dataset(TrajectoryDataset((self.trajectory,)))
        other = straight_trajectory(self.task, start=-3.0, steps=10, iteration=1)
        grown = first.updated(other)
        self.assertEqual(len(grown), len(first) + 11)

    def test_nearest(self):
        safe_set = SampledSafeSet.from_dataset(TrajectoryDataset((self.trajectory,)))
        indices = safe_set.nearest([2.02, 0.0, 0.0], 3)
        np.testing.assert_allclose(safe_set.states[indices, 0], [2.0, 2.1, 1.9], atol=1e-9)
        self.assertEqual(len(safe_set.nearest([0.0, 0.0, 0.0], 0)), 51)
        self.assertEqual(len(safe_set.nearest([0.0, 0.0, 0.0], 1)), 1)

    def test_empty(self):
        with self.assertRaises(ContractViolationError):
            SampledSafeSet.from_dataset(TrajectoryDataset())


class BaselineSolveTestCase(SimpleTestCase):
    """Test cases for candidate enumeration"""

    def setUp(self):
        self.task = benchmark_task(obstacles=[], horizon=3, max_steps=10)
        self.config = SolverConfig()

    def test_single_candidate_pins_terminal(self):
        goal_only = Trajectory.from_run(self.task, 0, [self.task.goal], np.zeros((0, 2)))
        safe_set = SampledSafeSet.from_dataset(TrajectoryDataset((goal_only,)))
        warm = [[2.0, 0.0], [0.0, 0.0], [0.0, 0.0]]
        step = baseline_solve([5.8, 0.0, 0.0], safe_set, self.task, warm, candidates=10, config=self.config)
        self.assertEqual(step.candidate, 0)
        self.assertNotEqual(step.solution.status, FALLBACK)
        np.testing.assert_allclose(step.solution.terminal_state, self.task.goal, atol=1e-3)

    def test_all_candidates_not_worse(self):
        safe_set = SampledSafeSet.from_dataset(TrajectoryDataset((straight_trajectory(self.task),)))
        state = [0.7, 0.0, 0.0]
        warm = np.tile([1.0, 0.0], (3, 1))
        nearest = baseline_solve(state, safe_set, self.task, warm, candidates=1, config=self.config)
        every = baseline_solve(state, safe_set, self.task, warm, candidates=0, config=self.config)
        self.assertEqual(every.attempted, 51)
        self.assertGreaterEqual(every.solved, nearest.solved)
        self.assertLessEqual(every.solution.objective, nearest.solution.objective + 1e-9)

    def test_recorded_warm_start_pads_with_rest(self):
        trajectory = straight_trajectory(self.task, steps=2)
        inputs = recorded_warm_start(trajectory, 5, 2)
        np.testing.assert_allclose(inputs[:2], [[1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(inputs[2:], np.zeros((3, 2)))


class BaselineRunTestCase(SimpleTestCase):
    """Test cases for a short baseline run"""

    def test_single_iteration(self):
        task = benchmark_task(horizon=5, max_steps=10)
        data = initial_dataset(task)
        with tempfile.TemporaryDirectory() as tmp:
            config = RunConfig.from_settings(task=task, iterations=1, output_dir=tmp, ledger=False,
                                             baseline_candidates=3)
            result = baseline_run(config, initial_data=data)
            self.assertTrue((Path(tmp) / 'iteration_1.csv').exists())
            self.assertTrue((Path(tmp) / 'performance.csv').exists())

        self.assertEqual([report.method for report in result.reports], [BASELINE, BASELINE])
        self.assertEqual(result.reports[0].cost.value, initial_report(task, data).cost.value)
        trajectory = result.reports[1].trajectory
        self.assertEqual(trajectory.method, BASELINE)
        self.assertFalse(np.any(in_unsafe(task, trajectory.states)))
        self.assertLessEqual(len(result.reports[1].steps), 10)
        self.assertEqual(len(result.data.executed()), 2)
        self.assertGreater(result.reports[1].goal_error, task.goal_tolerance)
        self.assertFalse(result.reports[1].trend_ok)
