import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from Certmpc.dynamics.tasks import benchmark_task, in_unsafe
from Certmpc.exceptions import (
    ContractViolationError, DegenerateRegionError, EmptyRegionError, TrainingDivergenceError,
)
from Certmpc.neural.networks import Certificate, Mlp, Policy
from .datasets import AUXILIARY, Trajectory, TrajectoryDataset, cost_to_go_tails
from .losses import LossWeights, batch_loss, clbf_loss
from .regions import SampleRegions, construct_regions
from .trainer import (
    TrainerConfig, check_containment, discounted_decrease, estimate_violation_bounds, train_certificate,
    uniform_states, validate_and_mine,
)


def straight_dataset(task, y=4.0, steps=120):
    """Drive along a horizontal line far from the obstacle"""
    states = [np.array([-6.0, y, 0.0])]
    inputs = np.tile([1.0, 0.0], (steps, 1))
    for u in inputs:
        states.append(task.dynamics(states[-1][None, :], u[None, :])[0])
    return TrajectoryDataset((Trajectory.from_run(task, 0, states, inputs),))


def square_loop_dataset(task, half=3.0, spacing=0.1):
    """Closed square loop around the obstacle at the origin"""
    corners = [(-half, -half), (half, -half), (half, half), (-half, half), (-half, -half)]
    states = []
    for (z0, y0), (z1, y1) in zip(corners[:-1], corners[1:]):
        count = int(round(max(abs(z1 - z0), abs(y1 - y0)) / spacing))
        heading = math.atan2(y1 - y0, z1 - z0)
        for s in np.linspace(0, 1, count, endpoint=False):
            states.append([z0 + s * (z1 - z0), y0 + s * (y1 - y0), heading])
    states = np.array(states)
    inputs = np.zeros((len(states) - 1, 2))
    return TrajectoryDataset((Trajectory.from_run(task, 0, states, inputs, kind=AUXILIARY),))


def zero_certificate(level=7.0):
    return Certificate(Mlp.zeros([3, 4, 1]), level)


def zero_policy(task):
    return Policy(Mlp.zeros([3, 4, 2]), task.input_lower, task.input_upper)


def small_config(**overrides):
    params = {
        'iterations': 20,
        'k_val': 10,
        'n_test': 200,
        'n_safe': 60,
        'n_unsafe': 60,
        'batch_size': 32,
        'certificate_hidden': (8, 8),
        'policy_hidden': (8,),
        'seed': 3,
    }
    params.update(overrides)
    return TrainerConfig(**params)


class DatasetTestCase(SimpleTestCase):
    """Test cases for trajectory datasets"""

    def setUp(self):
        self.task = benchmark_task()

    def test_cost_to_go_tails(self):
        """Test tails follow the discounted recursion"""
        states = np.array([[5.0, 0, 0], [5.0, 0, 0], [6.0, 0, 0]])
        tails = cost_to_go_tails(self.task, states, np.zeros((2, 2)))
        self.assertEqual(tails[-1], 0.0)
        self.assertAlmostEqual(tails[1], 0.001)
        self.assertAlmostEqual(tails[0], 0.001 + 0.8 * 0.001)

    def test_updated_grows_and_keeps_previous(self):
        data = straight_dataset(self.task)
        grown = data.updated(straight_dataset(self.task, y=5.0).trajectories[0])
        self.assertGreater(len(grown), len(data))
        self.assertIs(grown.trajectories[0], data.trajectories[0])

    def test_transitions_skip_auxiliary(self):
        data = straight_dataset(self.task).updated(*square_loop_dataset(self.task).trajectories)
        x_k, u_k, x_next = data.transitions()
        self.assertEqual(len(x_k), 120)
        self.assertEqual(u_k.shape, (120, 2))
        np.testing.assert_allclose(x_next, self.task.dynamics(x_k, u_k))

    def test_validate_accepts_driven_trajectory(self):
        self.assertTrue(straight_dataset(self.task).validate(self.task))

    def test_validate_rejects_unsafe_state(self):
        states = np.array([[-2.0, 0, 0], [0.0, 0, 0]])
        data = TrajectoryDataset((Trajectory.from_run(self.task, 0, states, np.zeros((1, 2))),))
        with self.assertRaises(ContractViolationError):
            data.validate(self.task, dynamics_tol=None)

    def test_validate_rejects_broken_dynamics(self):
        states = np.array([[-2.0, 3, 0], [-1.0, 3, 0]])
        data = TrajectoryDataset((Trajectory.from_run(self.task, 0, states, np.zeros((1, 2))),))
        with self.assertRaises(ContractViolationError):
            data.validate(self.task)

    def test_jsonl_file(self):
        """Test records carry a null final input and reload"""
        data = straight_dataset(self.task, steps=5)
        with tempfile.TemporaryDirectory() as tmp:
            path = data.write_jsonl(Path(tmp) / 'dataset.jsonl')
            lines = Path(path).read_text().splitlines()
            loaded = TrajectoryDataset.read_jsonl(path)
        self.assertEqual(len(lines), 6)
        self.assertIn('"u": null', lines[-1])
        np.testing.assert_array_equal(loaded.trajectories[0].states, data.trajectories[0].states)
        np.testing.assert_array_equal(loaded.trajectories[0].cost_to_go, data.trajectories[0].cost_to_go)


class RegionTestCase(SimpleTestCase):
    """Test cases for safe/unsafe sample construction"""

    def setUp(self):
        self.task = benchmark_task()

    def test_straight_line_safe_samples(self):
        regions = construct_regions(straight_dataset(self.task), self.task, counts=(100, 100),
                                    rng=np.random.default_rng(0))
        self.assertEqual(len(regions.safe), 100)
        self.assertFalse(np.any(in_unsafe(self.task, regions.safe)))
        self.assertTrue(np.all(regions.label(self.task, regions.safe)))

    def test_unsafe_samples_are_labeled_unsafe(self):
        regions = construct_regions(straight_dataset(self.task), self.task, counts=(100, 100),
                                    rng=np.random.default_rng(1))
        self.assertEqual(len(regions.unsafe), 100)
        self.assertFalse(np.any(regions.label(self.task, regions.unsafe)))

    def test_loop_excludes_obstacle(self):
        """Test the loop's cavity, and so the obstacle, stays outside"""
        regions = construct_regions(square_loop_dataset(self.task), self.task, counts=(300, 100),
                                    rng=np.random.default_rng(2))
        self.assertFalse(regions.shape.contains([0.0, 0.0]))
        distance = np.linalg.norm(regions.safe[:, :2], axis=1)
        self.assertTrue(np.all(distance > 1.0))

    def test_dataset_safe_source(self):
        data = straight_dataset(self.task)
        regions = construct_regions(data, self.task, counts=(10, 10), safe_source='dataset')
        self.assertEqual(len(regions.safe), len(data))

    def test_headings_stay_near_data(self):
        regions = construct_regions(straight_dataset(self.task), self.task, counts=(200, 10),
                                    rng=np.random.default_rng(3), theta_jitter=0.2)
        self.assertTrue(np.all(np.abs(regions.safe[:, 2]) <= 0.2 + 1e-12))

    def test_empty_dataset(self):
        with self.assertRaises(EmptyRegionError):
            construct_regions(TrajectoryDataset(), self.task)

    def test_tiny_alpha_is_empty(self):
        with self.assertRaises(EmptyRegionError):
            construct_regions(straight_dataset(self.task), self.task, alpha=1e-6)

    def test_degenerate_dataset(self):
        """Test fewer than three distinct points cannot form a region"""
        states = np.array([[-6.0, 4, 0], [-5.9, 4, 0]])
        data = TrajectoryDataset((Trajectory.from_run(self.task, 0, states, [[1.0, 0.0]]),))
        with self.assertRaises(DegenerateRegionError):
            construct_regions(data, self.task, inflate=0.0)

    def test_augmented_routes_samples(self):
        regions = construct_regions(straight_dataset(self.task), self.task, counts=(20, 20))
        grown = regions.augmented(np.zeros((3, 3)), np.ones((2, 3)))
        self.assertEqual(grown.counts, (23, 22))


class LossTestCase(SimpleTestCase):
    """Test cases for the certificate loss"""

    def setUp(self):
        self.task = benchmark_task()
        self.weights = LossWeights.for_task(self.task)

    def test_zero_certificate_loss_equals_level(self):
        """Test only the unsafe hinge is active for V = 0"""
        regions = SampleRegions(self.task.goal[None, :], np.array([[0.0, 0, 0], [0.5, 0.2, 1.0]]), 1.0, None)
        result = clbf_loss(zero_certificate(), zero_policy(self.task), regions, TrajectoryDataset(),
                           self.weights, self.task)
        self.assertAlmostEqual(result.value, 7.0)
        self.assertAlmostEqual(result.terms['unsafe_level'], 7.0)

    def test_satisfied_conditions_leave_goal_term(self):
        """Test hinges vanish when every condition holds with margin"""
        cert = Certificate(Mlp([3, 1], [[[1.0, 0.0, 0.0]]], [[0.0]]), 7.0)
        regions = SampleRegions(np.array([[2.0, 0.0, math.pi]]), np.array([[5.0, 0.0, 0.0]]), 1.0, None)
        result = clbf_loss(cert, zero_policy(self.task), regions, TrajectoryDataset(), self.weights, self.task)
        self.assertAlmostEqual(result.value, 36.0 ** 2)
        self.assertEqual(result.terms['safe_level'], 0.0)
        self.assertEqual(result.terms['discounted_decrease'], 0.0)

    def test_gradients_match_finite_differences(self):
        """Test certificate and policy gradients away from hinge kinks"""
        rng = np.random.default_rng(4)
        checked, h = 0, 1e-5
        for _ in range(10):
            cert = Certificate.initialize(3, [6], 2, rng.uniform(0.5, 3.0), rng)
            policy = Policy.initialize(3, [5], self.task.input_lower, self.task.input_upper, rng)
            safe = rng.uniform(-3, 3, size=(6, 3))
            unsafe = rng.uniform(-3, 3, size=(6, 3))
            x_k = rng.uniform(-3, 3, size=(4, 3))
            u_k = rng.uniform([0, -1], [2, 1], size=(4, 2))
            transitions = (x_k, u_k, self.task.dynamics(x_k, u_k))
            weights = LossWeights(1.0, 2.0, 0.5, 1.5, 1.0, level=cert.level, discount=0.8)
            result = batch_loss(cert, policy, safe, unsafe, transitions, weights, self.task)
            if result.hinge_margin < 1e-3:
                continue
            checked += 1

            def cert_loss(p):
                return batch_loss(cert.with_flat(p), policy, safe, unsafe, transitions, weights, self.task).value

            def policy_loss(p):
                return batch_loss(cert, policy.with_flat(p), safe, unsafe, transitions, weights, self.task).value

            for func, point, analytic in ((cert_loss, cert.net.flat(), result.certificate_grad),
                                          (policy_loss, policy.net.flat(), result.policy_grad)):
                numeric = np.array([
                    (func(point + h * e) - func(point - h * e)) / (2 * h) for e in np.eye(point.size)
                ])
                np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)
        self.assertGreater(checked, 0)

    def test_loss_is_nonnegative(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            cert = Certificate.initialize(3, [8], 1, 7.0, rng)
            policy = Policy.initialize(3, [8], self.task.input_lower, self.task.input_upper, rng)
            regions = SampleRegions(rng.uniform(-8, 8, (20, 3)), rng.uniform(-8, 8, (20, 3)), 1.0, None)
            self.assertGreaterEqual(
                clbf_loss(cert, policy, regions, straight_dataset(self.task, steps=10), self.weights, self.task).value,
                0.0,
            )

    def test_non_finite_certificate_aborts(self):
        cert = Certificate(Mlp([3, 1], [[[1e200, 0.0, 0.0]]], [[0.0]]), 7.0)
        regions = SampleRegions(np.array([[2.0, 1.0, 0.0]]), np.array([[5.0, 0.0, 0.0]]), 1.0, None)
        with self.assertRaises(TrainingDivergenceError) as ctx:
            clbf_loss(cert, zero_policy(self.task), regions, TrajectoryDataset(), self.weights, self.task)
        self.assertIn('sample', ctx.exception.details)

    def test_empty_regions_rejected(self):
        regions = SampleRegions(np.empty((0, 3)), np.zeros((1, 3)), 1.0, None)
        with self.assertRaises(ContractViolationError):
            clbf_loss(zero_certificate(), zero_policy(self.task), regions, TrajectoryDataset(),
                      self.weights, self.task)


class ValidationTestCase(SimpleTestCase):
    """Test cases for counterexample mining and violation bounds"""

    def setUp(self):
        self.task = benchmark_task()
        self.data = straight_dataset(self.task)
        self.regions = construct_regions(self.data, self.task, counts=(50, 50))

    def test_zero_certificate_fails_unsafe_level_everywhere(self):
        """Test every unsafe-region sample violates the unsafe level condition"""
        mined = validate_and_mine(zero_certificate(), zero_policy(self.task), self.task, self.regions, 300, seed=0)
        unsafe_count = int(np.sum(~self.regions.label(self.task, mined.states)))
        self.assertEqual(mined.report.counts['unsafe_level'], unsafe_count)
        self.assertEqual(mined.report.rates['unsafe_level'], 1.0)
        self.assertEqual(len(mined.safe) + len(mined.unsafe), len(mined))

    def test_mining_is_reproducible(self):
        cert = Certificate.initialize(3, [8], 1, 7.0, np.random.default_rng(6))
        policy = Policy.initialize(3, [8], self.task.input_lower, self.task.input_upper, np.random.default_rng(7))
        first = validate_and_mine(cert, policy, self.task, self.regions, 200, seed=11)
        second = validate_and_mine(cert, policy, self.task, self.regions, 200, seed=11)
        np.testing.assert_array_equal(first.states, second.states)

    def test_zero_bounds_for_zero_certificate(self):
        """Test V = 0 gives delta1 from the stage cost and delta2 = 0"""
        bounds = estimate_violation_bounds(zero_certificate(), zero_policy(self.task), self.data,
                                           self.task, 100, seed=0)
        self.assertGreater(bounds.delta1, 0.0)
        self.assertEqual(bounds.delta2, 0.0)

    def test_constant_certificate_residual(self):
        """Test a constant V leaves gamma V - V + l at the goal"""
        level = 7.0
        constant = math.sqrt(1.5)
        cert = Certificate(Mlp([3, 1], [np.zeros((1, 3))], [[constant]]), level)
        states = np.array([[6.0, 0.0, 0.0]])
        residual, _ = discounted_decrease(cert, zero_policy(self.task), self.task, states)
        self.assertAlmostEqual(residual[0], (0.8 - 1.0) * 1.5 + 0.0, places=12)

    def test_delta1_covers_uncertified_states(self):
        """Test violations where V exceeds the level still count towards delta1"""
        cert = Certificate(Mlp([3, 1], [np.zeros((1, 3))], [[1.0]]), 0.1)
        policy = zero_policy(self.task)
        states = uniform_states(self.task, 2000, 3)
        self.assertTrue(np.all(cert.values(states) > cert.level))
        residual, _ = discounted_decrease(cert, policy, self.task, states)
        bounds = estimate_violation_bounds(cert, policy, self.data, self.task, 2000, seed=3)
        self.assertGreater(float(np.max(residual)), 0.0)
        self.assertAlmostEqual(bounds.delta1, float(np.max(residual)))
        self.assertEqual(bounds.delta1_samples, 2000)

    def test_empty_dataset_delta2(self):
        with self.assertLogs('Certmpc.certificates.trainer', level='WARNING'):
            bounds = estimate_violation_bounds(zero_certificate(), zero_policy(self.task),
                                               TrajectoryDataset(), self.task, 50, seed=0)
        self.assertEqual(bounds.delta2, 0.0)
        self.assertEqual(bounds.delta2_samples, 0)

    def test_bounds_reproducible(self):
        cert = Certificate.initialize(3, [8], 1, 7.0, np.random.default_rng(8))
        policy = Policy.initialize(3, [8], self.task.input_lower, self.task.input_upper, np.random.default_rng(9))
        first = estimate_violation_bounds(cert, policy, self.data, self.task, 500, seed=2)
        second = estimate_violation_bounds(cert, policy, self.data, self.task, 500, seed=2)
        self.assertEqual(first, second)


class ContainmentTestCase(SimpleTestCase):
    """Test cases for the sampled containment check"""

    def setUp(self):
        self.cert = Certificate.initialize(3, [8], 1, 7.0, np.random.default_rng(10))
        self.samples = np.random.default_rng(11).uniform(-8, 8, size=(1000, 3))

    def test_identical_certificates(self):
        report = check_containment(self.cert, self.cert, 7.0, self.samples)
        self.assertEqual(report.fraction, 0.0)

    def test_doubled_certificate(self):
        """Test doubling V loses every sample with c/2 < V <= c"""
        doubled_net = self.cert.net.copy()
        doubled_net.weights[-1] = doubled_net.weights[-1] * math.sqrt(2)
        doubled_net.biases[-1] = doubled_net.biases[-1] * math.sqrt(2)
        doubled = Certificate(doubled_net, 7.0)
        values = self.cert.values(self.samples)
        level = float(np.median(values))
        band = self.samples[(values > level / 2) & (values <= level)]
        self.assertGreater(len(band), 0)
        report = check_containment(self.cert, doubled, level, band)
        self.assertAlmostEqual(report.fraction, 1.0)

    def test_dimension_mismatch(self):
        other = Certificate.initialize(2, [4], 1, 7.0, np.random.default_rng(12))
        with self.assertRaises(ContractViolationError):
            check_containment(self.cert, other, 7.0, self.samples)


class TrainCertificateTestCase(SimpleTestCase):
    """Test cases for the training loop"""

    def setUp(self):
        self.task = benchmark_task()
        self.data = straight_dataset(self.task)

    def test_training_returns_networks_and_bounds(self):
        result = train_certificate(self.data, self.task, small_config())
        self.assertEqual(result.certificate.state_dim, 3)
        self.assertEqual(len(result.history), 2)
        self.assertTrue(math.isfinite(result.bounds.delta1))
        self.assertGreaterEqual(result.bounds.delta2, 0.0)
        self.assertGreaterEqual(len(result.regions.safe), 60)

    def test_training_is_deterministic(self):
        first = train_certificate(self.data, self.task, small_config())
        second = train_certificate(self.data, self.task, small_config())
        np.testing.assert_array_equal(first.certificate.net.flat(), second.certificate.net.flat())
        self.assertEqual(first.bounds, second.bounds)

    def test_warm_start_uses_previous_parameters(self):
        first = train_certificate(self.data, self.task, small_config())
        resumed = train_certificate(self.data, self.task, small_config(iterations=0),
                                    previous=(first.certificate, first.policy))
        np.testing.assert_array_equal(resumed.certificate.net.flat(), first.certificate.net.flat())

    def test_degenerate_dataset(self):
        states = np.array([[-6.0, 4, 0], [-5.9, 4, 0]])
        data = TrajectoryDataset((Trajectory.from_run(self.task, 0, states, [[1.0, 0.0]]),))
        with self.assertRaises(DegenerateRegionError):
            train_certificate(data, self.task, small_config(inflate=0.0))
