import tempfile
from pathlib import Path
from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase, TestCase

from Certmpc.certificates.datasets import AUXILIARY, TrajectoryDataset, cost_to_go_tails
from Certmpc.dynamics.tasks import DiscountedCost, WheelGeometry, benchmark_task, in_unsafe, substep_plant
from Certmpc.exceptions import (
    AssumptionViolationError, ConfigurationError, ContractViolationError, SafetyViolationError,
)
from Certmpc.neural.networks import Certificate, Mlp, Policy
from Certmpc.runner.exporters import heatmap_name
from .config import RunConfig
from .initial import cruise, initial_dataset, skirting_maneuver
from .models import IterationRecord
from .orchestrator import bootstrap, execute_closed_loop, fill_lyapunov_gaps, run_all
from .reports import IterationReport, StepRecord, performance_summary, record_iteration


def quadratic_certificate(task, scale=0.1, level=1e6):
    weights = scale * np.eye(3)
    return Certificate(Mlp([3, 3], [weights], [-weights @ task.goal]), level)


def zero_policy(task):
    return Policy(Mlp.zeros([3, 4, 2]), task.input_lower, task.input_upper)


class StraightController:
    """Drives along the z axis at full speed, slowing down on the last step"""

    def __init__(self, task):
        self.task = task

    def __call__(self, state, t):
        distance = self.task.goal[0] - state[0]
        speed = min(self.task.input_upper[0], distance / self.task.time_step)
        solution = SimpleNamespace(status='converged', objective=0.0, residuals={}, iterations=1,
                                   wall_time_ms=1.0)
        return np.array([speed, 0.0]), solution, {'delta1_terminal': 0.0, 'stability_flag': True}


class InitialDatasetTestCase(SimpleTestCase):
    """Test cases for the initial trajectory and its auxiliary samples"""

    def setUp(self):
        self.task = benchmark_task()

    def test_cruise_covers_distance(self):
        np.testing.assert_allclose(cruise(1.0, 2.0, 0.1), np.tile([2.0, 0.0], (5, 1)))
        inputs = cruise(1.05, 2.0, 0.1)
        self.assertEqual(len(inputs), 6)
        self.assertAlmostEqual(inputs[-1, 0], 0.5)
        self.assertEqual(len(cruise(0.0, 2.0, 0.1)), 0)

    def test_maneuver_is_safe_and_reaches_goal(self):
        states, inputs = skirting_maneuver(self.task)
        self.assertEqual(len(states), len(inputs) + 1)
        self.assertFalse(np.any(in_unsafe(self.task, states)))
        self.assertLessEqual(np.linalg.norm(states[-1] - self.task.goal), self.task.goal_tolerance)
        self.assertTrue(np.all(inputs >= self.task.input_lower))
        self.assertTrue(np.all(inputs <= self.task.input_upper))

    def test_maneuver_needs_common_line(self):
        task = benchmark_task(start=[-6.0, 1.0, 0.0])
        with self.assertRaises(ConfigurationError):
            skirting_maneuver(task)

    def test_dataset_has_auxiliary_samples(self):
        data = initial_dataset(self.task)
        executed = data.executed()
        self.assertEqual(len(executed), 1)
        self.assertEqual(executed[0].method, 'initial')
        auxiliary = [trajectory for trajectory in data.trajectories if trajectory.kind == AUXILIARY]
        self.assertEqual(len(auxiliary), 1)
        self.assertFalse(np.any(in_unsafe(self.task, auxiliary[0].states)))

    def test_dataset_from_file(self):
        data = initial_dataset(self.task)
        with tempfile.TemporaryDirectory() as tmp:
            path = data.write_jsonl(Path(tmp) / 'initial.jsonl')
            loaded = initial_dataset(self.task, path=path)
        np.testing.assert_allclose(loaded.executed()[0].states, data.executed()[0].states)

    def test_file_without_trajectory(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = TrajectoryDataset().write_jsonl(Path(tmp) / 'empty.jsonl')
            with self.assertRaises(ConfigurationError):
                initial_dataset(self.task, path=path)


class ClosedLoopTestCase(SimpleTestCase):
    """Test cases for closed-loop execution"""

    def test_reaches_goal_without_obstacles(self):
        task = benchmark_task(obstacles=[])
        outcome = execute_closed_loop(task, StraightController(task), substep_plant(task, 1),
                                      WheelGeometry(), iteration=1)
        self.assertLessEqual(outcome.goal_error, task.goal_tolerance)
        self.assertEqual(len(outcome.steps), len(outcome.trajectory.inputs))
        self.assertEqual(len(outcome.steps), 60)
        right, left = outcome.steps[0].wheels
        self.assertAlmostEqual(right, 2.0 / 0.035)
        self.assertAlmostEqual(left, 2.0 / 0.035)

    def test_unsafe_step_raises(self):
        task = benchmark_task()
        with self.assertRaises(SafetyViolationError) as context:
            execute_closed_loop(task, StraightController(task), substep_plant(task, 1),
                                WheelGeometry(), iteration=2)
        details = context.exception.details
        self.assertEqual(details['iteration'], 2)
        self.assertTrue(in_unsafe(task, np.array(details['state'])))
        self.assertEqual(len(details['trace']), details['t'] + 1)

    def test_substeps_detect_crossing(self):
        """Test a path that skips over the obstacle between samples is still caught"""
        task = benchmark_task(obstacles=[((0.0, 0.0), 0.05)], time_step=1.0, horizon=5, max_steps=20,
                              input_upper=[2.0, 1.5])
        x = np.array([-1.0, 0.0, 0.0])
        _, path = substep_plant(task, 10)(x, np.array([2.0, 0.0]))
        self.assertTrue(np.any(in_unsafe(task, path)))
        self.assertFalse(in_unsafe(task, path[-1]))

    def test_start_at_goal(self):
        task = benchmark_task(obstacles=[], start=[6.0, 0.0, 0.0])
        outcome = execute_closed_loop(task, StraightController(task), substep_plant(task, 1),
                                      WheelGeometry(), iteration=1)
        self.assertEqual(outcome.steps, [])
        self.assertEqual(len(outcome.trajectory.states), 1)

    def test_lyapunov_gap_vanishes_for_exact_costs(self):
        task = benchmark_task()
        rng = np.random.default_rng(3)
        states = rng.uniform([-5, -5, -1], [5, 5, 1], size=(6, 3))
        inputs = rng.uniform(task.input_lower, task.input_upper, size=(5, 2))
        tails = cost_to_go_tails(task, states, inputs)
        steps = [StepRecord(t, states[t], inputs[t], 'converged', float(tails[t]), {}, 1, 1.0, (0.0, 0.0))
                 for t in range(5)]
        fill_lyapunov_gaps(task, steps, normalized=True)
        for step in steps[:-1]:
            self.assertAlmostEqual(step.lyapunov_gap, 0.0, places=10)
        self.assertIsNone(steps[-1].lyapunov_gap)


class BootstrapTestCase(SimpleTestCase):
    """Test cases for the first certificate checks"""

    def setUp(self):
        self.task = benchmark_task()
        self.config = RunConfig.from_settings(task=self.task, ledger=False, output_dir=None)
        self.data = initial_dataset(self.task)

    def test_empty_dataset(self):
        with self.assertRaises(AssumptionViolationError):
            bootstrap(TrajectoryDataset(), self.task, self.config)

    def test_certificate_needs_policy(self):
        with self.assertRaises(ContractViolationError):
            bootstrap(self.data, self.task, self.config, certificate=quadratic_certificate(self.task))

    def test_data_outside_region(self):
        cert = quadratic_certificate(self.task, level=1e-3)
        with self.assertRaises(AssumptionViolationError) as context:
            bootstrap(self.data, self.task, self.config, cert, zero_policy(self.task))
        self.assertGreater(context.exception.details['fraction'], 0.9)

    def test_supplied_certificate(self):
        result = bootstrap(self.data, self.task, self.config, quadratic_certificate(self.task),
                           zero_policy(self.task))
        self.assertIsNone(result.training)
        self.assertEqual(result.outside_fraction, 0.0)
        self.assertEqual(result.initial_solution.inputs.shape, (self.task.horizon, 2))


class RunAllTestCase(SimpleTestCase):
    """Test cases for a short learning run with a fixed first certificate"""

    def test_single_iteration_artifacts(self):
        task = benchmark_task(horizon=5, max_steps=10)
        with tempfile.TemporaryDirectory() as tmp:
            config = RunConfig.from_settings(task=task, iterations=1, output_dir=tmp, ledger=False)
            result = run_all(config, certificate=quadratic_certificate(task), policy=zero_policy(task))
            names = {path.name for path in Path(tmp).iterdir()}
            for name in ('dataset.jsonl', 'cert_0.params', 'policy_0.params', 'iteration_1.csv',
                         'summary.csv', 'timings.csv', 'performance.csv', heatmap_name(0, config.heatmap_theta)):
                self.assertIn(name, names)
            self.assertNotIn('cert_1.params', names)
            reloaded = TrajectoryDataset.read_jsonl(Path(tmp) / 'dataset.jsonl')

        self.assertEqual([report.iteration for report in result.reports], [0, 1])
        first = result.reports[1]
        self.assertLessEqual(len(first.steps), 10)
        self.assertIsNone(first.containment_fraction)
        self.assertGreaterEqual(first.delta2, 0.0)
        self.assertEqual(len(result.data.executed()), 2)
        self.assertEqual(len(reloaded.executed()), 2)
        self.assertFalse(np.any(in_unsafe(task, first.trajectory.states)))

    def test_short_iteration_fails_cost_trend(self):
        """Test an iteration stopped short of the goal never passes the cost trend check"""
        task = benchmark_task(horizon=5, max_steps=10)
        config = RunConfig.from_settings(task=task, iterations=1, output_dir=None, ledger=False)
        with self.assertLogs('Certmpc.iterations.orchestrator', level='WARNING') as logs:
            result = run_all(config, certificate=quadratic_certificate(task), policy=zero_policy(task))
        report = result.reports[1]
        self.assertGreater(report.goal_error, task.goal_tolerance)
        self.assertLess(report.cost.value, result.reports[0].cost.value)
        self.assertFalse(report.trend_ok)
        self.assertTrue(any('did not reach the goal' in line for line in logs.output))

    def test_two_iterations_are_reproducible(self):
        """Test retraining between iterations and identical summaries for the same seed"""
        task = benchmark_task(horizon=5, max_steps=10)
        summaries = []
        with tempfile.TemporaryDirectory() as tmp:
            for name in ('first', 'second'):
                config = RunConfig.from_settings(task=task, iterations=2, output_dir=Path(tmp) / name,
                                                 ledger=False, seed=4)
                result = run_all(config, certificate=quadratic_certificate(task), policy=zero_policy(task))
                summaries.append((Path(tmp) / name / 'summary.csv').read_bytes())
            names = {path.name for path in (Path(tmp) / 'first').iterdir()}

        for name in ('cert_1.params', 'policy_1.params', 'iteration_2.csv',
                     heatmap_name(1, config.heatmap_theta)):
            self.assertIn(name, names)
        self.assertNotIn('cert_2.params', names)
        self.assertEqual(summaries[0], summaries[1])
        self.assertEqual([report.iteration for report in result.reports], [0, 1, 2])
        self.assertIsNone(result.reports[1].containment_fraction)
        self.assertIsNotNone(result.reports[2].containment_fraction)
        self.assertTrue(0.0 <= result.reports[2].containment_fraction <= 1.0)
        self.assertEqual(len(result.data.executed()), 3)


class PerformanceTableTestCase(SimpleTestCase):
    """Test cases for the performance summary"""

    def test_rows_and_baseline_columns(self):
        entries = [
            {'iteration': 0, 'cost': 3.0, 'undiscounted_cost': 9.0, 'mean_solve_ms': None, 'total_solve_ms': None},
            {'iteration': 1, 'cost': 2.0, 'undiscounted_cost': 5.0, 'mean_solve_ms': 20.0, 'total_solve_ms': 1500.0},
        ]
        table = performance_summary(entries, baseline_reports=entries[1:])
        self.assertEqual(len(table.header), 9)
        self.assertEqual(table.rows[0][5:], [None] * 4)
        self.assertEqual(table.rows[1][4], 1.5)
        self.assertIn('--', table.text())


class IterationLedgerTestCase(TestCase):
    """Test cases for the iteration ledger"""

    def report(self, iteration, cost):
        return IterationReport(iteration=iteration, method='proposed',
                               cost=DiscountedCost(cost, 2 * cost, 0.0, 10), trajectory=None)

    def test_record_is_upserted(self):
        record_iteration('run-a', self.report(1, 2.0))
        record_iteration('run-a', self.report(1, 1.5))
        self.assertEqual(IterationRecord.objects.count(), 1)
        self.assertEqual(IterationRecord.objects.get().cost, 1.5)

    def test_cost_reduction(self):
        record_iteration('run-a', self.report(0, 4.0))
        record_iteration('run-a', self.report(2, 3.0))
        record = IterationRecord.objects.get(iteration=2)
        self.assertAlmostEqual(record.cost_reduction, 0.25)
        self.assertAlmostEqual(IterationRecord.objects.get(iteration=0).cost_reduction, 0.0)
        self.assertIsNone(IterationRecord(run_label='run-b', iteration=1, cost=1.0, undiscounted_cost=1.0).cost_reduction)
