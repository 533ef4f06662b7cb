import math

import numpy as np
from django.test import SimpleTestCase

from Certmpc.exceptions import ConfigurationError, ContractViolationError
from .serializers import TaskSerializer, build_task
from .tasks import (
    Obstacle, WheelGeometry, benchmark_task, discounted_cost, in_unsafe, stage_cost, step,
    substep_plant, wheel_velocities,
)


class StepTestCase(SimpleTestCase):
    """Test cases for the Dubins step"""

    def setUp(self):
        self.task = benchmark_task()

    def test_straight_step(self):
        """Test heading zero moves along z"""
        np.testing.assert_allclose(step(self.task, [0, 0, 0], [2, 0]), [0.2, 0, 0], atol=1e-12)

    def test_quarter_turn_heading(self):
        """Test heading pi/2 moves along y"""
        np.testing.assert_allclose(step(self.task, [0, 0, math.pi / 2], [1, 0]), [0, 0.1, math.pi / 2], atol=1e-12)

    def test_goal_is_equilibrium(self):
        """Test the goal is fixed under zero input"""
        np.testing.assert_array_equal(step(self.task, [6, 0, 0], [0, 0]), [6, 0, 0])

    def test_heading_is_not_wrapped(self):
        """Test theta grows past pi without wrapping"""
        result = step(self.task, [0, 0, 3.1], [0, 1.5])
        self.assertAlmostEqual(result[2], 3.25)

    def test_batch_matches_single(self):
        """Test batched evaluation agrees with single vectors"""
        rng = np.random.default_rng(0)
        states = rng.uniform(-3, 3, size=(5, 3))
        inputs = rng.uniform(0, 1, size=(5, 2))
        batch = step(self.task, states, inputs)
        for i in range(5):
            np.testing.assert_allclose(batch[i], step(self.task, states[i], inputs[i]))

    def test_dimension_mismatch(self):
        """Test a wrong state length raises a contract violation"""
        with self.assertRaises(ContractViolationError):
            step(self.task, [0, 0], [1, 0])

    def test_jacobians_match_finite_differences(self):
        """Test analytic dynamics Jacobians"""
        rng = np.random.default_rng(1)
        x = rng.normal(size=(1, 3))
        u = rng.normal(size=(1, 2))
        state_jac, input_jac = self.task.dynamics.jacobians(x, u)
        h = 1e-6
        for i in range(3):
            dx = np.zeros((1, 3))
            dx[0, i] = h
            column = (self.task.dynamics(x + dx, u) - self.task.dynamics(x - dx, u)) / (2 * h)
            np.testing.assert_allclose(state_jac[0, :, i], column[0], atol=1e-8)
        for i in range(2):
            du = np.zeros((1, 2))
            du[0, i] = h
            column = (self.task.dynamics(x, u + du) - self.task.dynamics(x, u - du)) / (2 * h)
            np.testing.assert_allclose(input_jac[0, :, i], column[0], atol=1e-8)

    def test_substep_plant_matches_single_step(self):
        """Test one sub-step reproduces the nominal step"""
        plant = substep_plant(self.task, 1)
        final, path = plant([0, 0, 0.3], [1, 0.2])
        self.assertEqual(path.shape, (1, 3))
        np.testing.assert_allclose(final, step(self.task, [0, 0, 0.3], [1, 0.2]))

    def test_substep_plant_straight_line(self):
        """Test held input over sub-steps on a straight line"""
        plant = substep_plant(self.task, 10)
        final, path = plant([0, 0, 0], [2, 0])
        self.assertEqual(path.shape, (10, 3))
        np.testing.assert_allclose(final, [0.2, 0, 0], atol=1e-12)


class StageCostTestCase(SimpleTestCase):
    """Test cases for the quadratic stage cost"""

    def setUp(self):
        self.task = benchmark_task()

    def test_zero_at_goal(self):
        """Test cost vanishes at the goal"""
        self.assertEqual(stage_cost(self.task, [6, 0, 0], [0, 0]), 0.0)

    def test_unit_distance(self):
        """Test cost one metre from the goal"""
        self.assertAlmostEqual(stage_cost(self.task, [5, 0, 0], [1.3, -0.4]), 0.001)

    def test_start_cost(self):
        """Test cost at the start state"""
        self.assertAlmostEqual(stage_cost(self.task, [-6, 0, 0], [0, 0]), 0.144)

    def test_positive_away_from_goal(self):
        """Test cost is positive for random states other than the goal"""
        rng = np.random.default_rng(2)
        states = rng.uniform(-8, 8, size=(200, 3))
        costs = stage_cost(self.task, states, np.zeros((200, 2)))
        self.assertTrue(np.all(costs > 0))


class UnsafeSetTestCase(SimpleTestCase):
    """Test cases for obstacle and domain membership"""

    def setUp(self):
        self.task = benchmark_task()

    def test_center_is_unsafe(self):
        self.assertTrue(in_unsafe(self.task, [0, 0, 0]))

    def test_clear_state_is_safe(self):
        self.assertFalse(in_unsafe(self.task, [2, 0, 0]))

    def test_boundary_is_unsafe(self):
        """Test the obstacle disc is closed"""
        self.assertTrue(in_unsafe(self.task, [1, 0, 0]))

    def test_outside_domain_is_unsafe(self):
        self.assertTrue(in_unsafe(self.task, [9, 0, 0]))

    def test_monotone_in_radius(self):
        """Test growing the radius never makes an unsafe state safe"""
        rng = np.random.default_rng(3)
        states = rng.uniform(-3, 3, size=(500, 3))
        previous = in_unsafe(self.task, states)
        for radius in (1.2, 1.5, 2.5):
            grown = benchmark_task(obstacles=[((0.0, 0.0), radius)])
            current = in_unsafe(grown, states)
            self.assertTrue(np.all(current[previous]))
            previous = current


class WheelVelocityTestCase(SimpleTestCase):
    """Test cases for the wheel velocity conversion"""

    def setUp(self):
        self.geometry = WheelGeometry(0.035, 0.23)

    def test_zero_input(self):
        self.assertEqual(wheel_velocities(self.geometry, 0.0, 0.0), (0.0, 0.0))

    def test_straight_motion(self):
        right, left = wheel_velocities(self.geometry, 0.035, 0.0)
        self.assertAlmostEqual(right, 1.0)
        self.assertAlmostEqual(left, 1.0)

    def test_pure_rotation(self):
        """Test the right wheel carries the minus term"""
        right, left = wheel_velocities(self.geometry, 0.0, 1.0)
        self.assertAlmostEqual(right, -0.115 / 0.035)
        self.assertAlmostEqual(left, 0.115 / 0.035)

    def test_swap_flag(self):
        swapped = WheelGeometry(0.035, 0.23, swap=True)
        right, left = wheel_velocities(swapped, 0.0, 1.0)
        self.assertAlmostEqual(right, 0.115 / 0.035)
        self.assertAlmostEqual(left, -0.115 / 0.035)

    def test_invalid_geometry(self):
        with self.assertRaises(ConfigurationError):
            WheelGeometry(0.0, 0.23)


class DiscountedCostTestCase(SimpleTestCase):
    """Test cases for the discounted performance cost"""

    def setUp(self):
        self.task = benchmark_task()

    def test_constant_trajectory(self):
        """Test three steps at unit distance"""
        result = discounted_cost(self.task, [[5, 0, 0]] * 3, [[0, 0]] * 3)
        self.assertAlmostEqual(result.value, 0.00244)
        self.assertAlmostEqual(result.undiscounted, 0.003)
        self.assertEqual(result.steps, 3)

    def test_goal_trajectory(self):
        result = discounted_cost(self.task, [[6, 0, 0]] * 4, [[0, 0]] * 4)
        self.assertEqual(result.value, 0.0)

    def test_single_state(self):
        result = discounted_cost(self.task, [[-6, 0, 0]], [[1, 1]])
        self.assertAlmostEqual(result.value, 0.144)

    def test_tail_bound_shrinks(self):
        """Test the truncation bound decays with length"""
        short = discounted_cost(self.task, [[5, 0, 0]] * 2, [[0, 0]] * 2)
        long = discounted_cost(self.task, [[5, 0, 0]] * 20, [[0, 0]] * 20)
        self.assertLess(long.tail_bound, short.tail_bound)

    def test_prefix_never_exceeds_full(self):
        rng = np.random.default_rng(4)
        states = rng.uniform(-5, 5, size=(10, 3))
        inputs = np.zeros((10, 2))
        full = discounted_cost(self.task, states, inputs).value
        for length in range(1, 10):
            self.assertLessEqual(discounted_cost(self.task, states[:length], inputs[:length]).value, full)

    def test_empty_trajectory(self):
        with self.assertRaises(ContractViolationError):
            discounted_cost(self.task, np.zeros((0, 3)), np.zeros((0, 2)))


class TaskSpecTestCase(SimpleTestCase):
    """Test cases for task construction and validation"""

    def test_goal_inside_obstacle_rejected(self):
        with self.assertRaises(ConfigurationError) as ctx:
            benchmark_task(obstacles=[((6.0, 0.0), 0.5)])
        self.assertIn('goal', ' '.join(ctx.exception.errors))

    def test_discount_out_of_range_rejected(self):
        with self.assertRaises(ConfigurationError):
            benchmark_task(discount=1.2)

    def test_obstacle_radius_must_be_positive(self):
        with self.assertRaises(ConfigurationError):
            Obstacle((0.0, 0.0), 0.0)

    def test_serializer_defaults(self):
        """Test an empty task section builds the benchmark"""
        serializer = TaskSerializer(data={})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        task, geometry = build_task(serializer.validated_data)
        self.assertEqual(task.horizon, 15)
        self.assertAlmostEqual(task.discount, 0.8)
        self.assertAlmostEqual(geometry.radius, 0.035)

    def test_serializer_rejects_discount(self):
        """Test discount 1.2 is rejected with a field message"""
        serializer = TaskSerializer(data={'discount': 1.2})
        self.assertFalse(serializer.is_valid())
        self.assertIn('discount', serializer.errors)

    def test_serializer_rejects_inverted_box(self):
        serializer = TaskSerializer(data={'input_lower': [2, 0], 'input_upper': [0, 1]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('input_box', serializer.errors)
