import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from Certmpc.exceptions import ConfigurationError, ContractViolationError
from .networks import Certificate, Mlp, Policy, backward, certificate_value, forward, policy_action
from .optimizers import OptimizerState, optimizer_step
from .utils import load_params, save_params


def numeric_gradient(func, point, h=1e-5):
    grad = np.zeros_like(point)
    for i in range(point.size):
        step = np.zeros_like(point)
        step[i] = h
        grad[i] = (func(point + step) - func(point - step)) / (2 * h)
    return grad


class ForwardTestCase(SimpleTestCase):
    """Test cases for network evaluation"""

    def test_zero_network_outputs_zero(self):
        net = Mlp.zeros([3, 8, 8, 2])
        np.testing.assert_array_equal(forward(net, [1.0, -2.0, 0.5]), [0.0, 0.0])

    def test_identity_like_network(self):
        """Test a unit-weight 1-1-1 net maps zero to zero"""
        net = Mlp([1, 1, 1], [[[1.0]], [[1.0]]], [[0.0], [0.0]])
        np.testing.assert_array_equal(forward(net, [0.0]), [0.0])

    def test_single_affine_layer(self):
        net = Mlp([1, 1], [[[2.0]]], [[1.0]])
        np.testing.assert_allclose(forward(net, [0.5]), [2.0])

    def test_deterministic(self):
        """Test two evaluations are bit-identical"""
        net = Mlp.initialize([3, 8, 8, 1], np.random.default_rng(0))
        x = np.random.default_rng(1).normal(size=(20, 3))
        np.testing.assert_array_equal(forward(net, x), forward(net, x))

    def test_dimension_mismatch(self):
        net = Mlp.zeros([3, 4, 1])
        with self.assertRaises(ContractViolationError):
            forward(net, [1.0, 2.0])

    def test_inconsistent_layers_rejected(self):
        with self.assertRaises(ContractViolationError):
            Mlp([2, 3], [np.zeros((2, 3))], [np.zeros(3)])

    def test_seeded_initialization_is_reproducible(self):
        first = Mlp.initialize([3, 32, 32, 1], np.random.default_rng(7))
        second = Mlp.initialize([3, 32, 32, 1], np.random.default_rng(7))
        np.testing.assert_array_equal(first.flat(), second.flat())
        self.assertLessEqual(np.max(np.abs(first.weights[0])), 1 / math.sqrt(3))

    def test_flat_round_trip(self):
        net = Mlp.initialize([3, 5, 2], np.random.default_rng(2))
        rebuilt = net.with_flat(net.flat())
        np.testing.assert_array_equal(rebuilt.flat(), net.flat())


class BackwardTestCase(SimpleTestCase):
    """Test cases for reverse-mode gradients"""

    def test_matches_finite_differences(self):
        """Test parameter and input gradients on random 3-8-8-1 nets"""
        rng = np.random.default_rng(3)
        for _ in range(100):
            net = Mlp.initialize([3, 8, 8, 1], rng)
            x = rng.normal(size=3)
            upstream = rng.normal(size=1)
            param_grad, input_grad = backward(net, x, upstream)

            numeric_params = numeric_gradient(
                lambda p: float(forward(net.with_flat(p), x) @ upstream), net.flat()
            )
            numeric_input = numeric_gradient(lambda z: float(forward(net, z) @ upstream), x)
            np.testing.assert_allclose(param_grad, numeric_params, rtol=1e-5, atol=1e-8)
            np.testing.assert_allclose(input_grad, numeric_input, rtol=1e-5, atol=1e-8)

    def test_zero_upstream(self):
        net = Mlp.initialize([3, 4, 2], np.random.default_rng(4))
        param_grad, input_grad = backward(net, [0.1, 0.2, 0.3], [0.0, 0.0])
        self.assertFalse(np.any(param_grad))
        self.assertFalse(np.any(input_grad))

    def test_linear_layer_weight_gradient(self):
        """Test dOut/dW equals the input for a linear layer"""
        net = Mlp([3, 1], [[[0.4, -0.2, 1.0]]], [[0.3]])
        x = np.array([1.5, -2.0, 0.25])
        param_grad, _ = backward(net, x, [1.0])
        np.testing.assert_allclose(param_grad[:3], x)
        self.assertAlmostEqual(param_grad[3], 1.0)

    def test_upstream_shape_mismatch(self):
        net = Mlp.zeros([3, 4, 2])
        with self.assertRaises(ContractViolationError):
            backward(net, [0.1, 0.2, 0.3], [1.0])


class CertificateTestCase(SimpleTestCase):
    """Test cases for the sum-of-squares certificate"""

    def test_zero_network(self):
        cert = Certificate(Mlp.zeros([3, 4, 1]), 7.0)
        self.assertEqual(certificate_value(cert, [1.0, 2.0, 3.0]), 0.0)

    def test_vector_output(self):
        """Test w(x) = [3, 4] gives 25"""
        cert = Certificate(Mlp([3, 2], [np.zeros((2, 3))], [[3.0, 4.0]]), 7.0)
        self.assertAlmostEqual(certificate_value(cert, [0.0, 0.0, 0.0]), 25.0)

    def test_nonnegative(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            cert = Certificate.initialize(3, [8, 8], 2, 7.0, rng)
            self.assertTrue(np.all(certificate_value(cert, rng.normal(scale=5, size=(200, 3))) >= 0))

    def test_input_gradient(self):
        rng = np.random.default_rng(6)
        cert = Certificate.initialize(3, [8, 8], 2, 7.0, rng)
        x = rng.normal(size=(1, 3))
        _, grad = cert.input_gradient(x)
        numeric = numeric_gradient(lambda z: certificate_value(cert, z), x[0])
        np.testing.assert_allclose(grad[0], numeric, rtol=1e-5, atol=1e-8)


class PolicyTestCase(SimpleTestCase):
    """Test cases for the squashed policy"""

    def setUp(self):
        self.lower = np.array([0.0, -math.pi / 2])
        self.upper = np.array([2.0, math.pi / 2])

    def test_zero_network_returns_midpoint(self):
        policy = Policy(Mlp.zeros([3, 4, 2]), self.lower, self.upper)
        np.testing.assert_allclose(policy_action(policy, [1.0, 1.0, 1.0]), [1.0, 0.0])

    def test_saturation_approaches_bound(self):
        net = Mlp([3, 2], [np.zeros((2, 3))], [[50.0, -50.0]])
        action = policy_action(Policy(net, self.lower, self.upper), [0.0, 0.0, 0.0])
        self.assertAlmostEqual(action[0], 2.0)
        self.assertAlmostEqual(action[1], -math.pi / 2)

    def test_box_override(self):
        policy = Policy(Mlp.zeros([3, 4, 1]), [0.0], [2.0])
        np.testing.assert_allclose(policy_action(policy, [0, 0, 0], box=([-1.0], [3.0])), [1.0])

    def test_actions_stay_in_box(self):
        rng = np.random.default_rng(8)
        policy = Policy.initialize(3, [16, 16], self.lower, self.upper, rng)
        actions = policy_action(policy, rng.normal(scale=10, size=(500, 3)))
        self.assertTrue(np.all(actions >= self.lower))
        self.assertTrue(np.all(actions <= self.upper))

    def test_parameter_gradient(self):
        rng = np.random.default_rng(9)
        policy = Policy.initialize(3, [4], self.lower, self.upper, rng)
        x = rng.normal(size=(1, 3))
        upstream = rng.normal(size=(1, 2))
        _, cache = policy.action_with_cache(x)
        grad, _ = policy.backward(cache, upstream)
        numeric = numeric_gradient(
            lambda p: float(np.sum(policy.with_flat(p).actions(x) * upstream)), policy.net.flat()
        )
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-8)


class OptimizerTestCase(SimpleTestCase):
    """Test cases for SGD and Adam updates"""

    def test_sgd_step(self):
        state = OptimizerState(method='sgd', learning_rate=0.1)
        np.testing.assert_allclose(optimizer_step(state, np.array([1.0]), np.array([2.0])), [0.8])

    def test_adam_zero_gradient(self):
        state = OptimizerState(method='adam', learning_rate=1e-3)
        np.testing.assert_array_equal(optimizer_step(state, np.array([1.0]), np.array([0.0])), [1.0])

    def test_adam_first_step_size(self):
        """Test the bias-corrected first step has size lr"""
        state = OptimizerState(method='adam', learning_rate=1e-3)
        params = np.array([1.0, -2.0, 0.5])
        updated = optimizer_step(state, params, np.array([3.0, -0.2, 40.0]))
        np.testing.assert_allclose(np.abs(updated - params), 1e-3, rtol=1e-4)

    def test_non_finite_gradient_rejected(self):
        state = OptimizerState(method='adam')
        params = np.array([1.0, 2.0])
        updated = optimizer_step(state, params, np.array([np.nan, 1.0]))
        np.testing.assert_array_equal(updated, params)
        self.assertEqual(state.rejected_steps, 1)
        self.assertTrue(state.last_rejected)
        self.assertEqual(state.step_count, 0)

    def test_unknown_method(self):
        with self.assertRaises(ConfigurationError):
            OptimizerState(method='rmsprop')

    def test_shape_mismatch(self):
        with self.assertRaises(ContractViolationError):
            optimizer_step(OptimizerState(), np.zeros(2), np.zeros(3))


class ParameterFileTestCase(SimpleTestCase):
    """Test cases for parameter files"""

    def test_certificate_file(self):
        cert = Certificate.initialize(3, [8, 8], 1, 7.0, np.random.default_rng(10))
        with tempfile.TemporaryDirectory() as tmp:
            path = save_params(Path(tmp) / 'cert_0.params', cert)
            loaded = load_params(path, expected_kind='certificate')
        np.testing.assert_array_equal(loaded.net.flat(), cert.net.flat())
        self.assertEqual(loaded.level, 7.0)

    def test_policy_file(self):
        policy = Policy.initialize(3, [4], [0.0, -1.0], [2.0, 1.0], np.random.default_rng(11))
        with tempfile.TemporaryDirectory() as tmp:
            path = save_params(Path(tmp) / 'policy_0.params', policy)
            loaded = load_params(path, expected_kind='policy')
        np.testing.assert_array_equal(loaded.upper, [2.0, 1.0])

    def test_kind_mismatch(self):
        policy = Policy.initialize(3, [4], [0.0], [2.0], np.random.default_rng(12))
        with tempfile.TemporaryDirectory() as tmp:
            path = save_params(Path(tmp) / 'policy.params', policy)
            with self.assertRaises(ContractViolationError):
                load_params(path, expected_kind='certificate')

    def test_corrupted_shapes(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'bad.params'
            path.write_text('{"version": 1, "kind": "certificate", "output_dim": 1, "level": 7,'
                            ' "sizes": [3, 1], "weights": [[[1, 2]]], "biases": [[0]]}')
            with self.assertRaises(ContractViolationError):
                load_params(path)
