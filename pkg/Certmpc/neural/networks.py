"""
Feedforward networks used as certificate and policy.

Hidden layers use tanh and the output layer is affine. Batches are
row-major: x has shape (B, input_size).
"""
import logging

import numpy as np

from Certmpc.exceptions import ContractViolationError

logger = logging.getLogger(__name__)


class Mlp:
    """
    Multi-layer perceptron with explicit weights and biases.

    ``weights[i]`` has shape (sizes[i + 1], sizes[i]) and ``biases[i]`` has
    shape (sizes[i + 1],).
    """

    def __init__(self, sizes, weights, biases):
        self.sizes = [int(size) for size in sizes]
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self._check()

    @classmethod
    def initialize(cls, sizes, rng):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(sizes, weights, biases)

    @classmethod
    def zeros(cls, sizes):
        weights = [np.zeros((fan_out, fan_in)) for fan_in, fan_out in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
        return cls(sizes, weights, biases)

    def _check(self):
        if len(self.sizes) < 2 or len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ContractViolationError('layer count does not match layer sizes', details={'sizes': self.sizes})
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.sizes[index + 1], self.sizes[index])
            if w.shape != expected or b.shape != (expected[0],):
                raise ContractViolationError(
                    'layer parameters have inconsistent shapes',
                    details={'layer': index, 'weight': list(w.shape), 'bias': list(b.shape)}
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ContractViolationError('layer parameters must be finite', details={'layer': index})

    @property
    def input_size(self):
        return self.sizes[0]

    @property
    def output_size(self):
        return self.sizes[-1]

    @property
    def parameter_count(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return Mlp(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self):
        """All parameters as one vector, layer by layer, weights before biases."""
        pieces = []
        for w, b in zip(self.weights, self.biases):
            pieces.append(w.ravel())
            pieces.append(b)
        return np.concatenate(pieces)

    def with_flat(self, vector):
        """New network with parameters taken from ``vector``."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.parameter_count,):
            raise ContractViolationError(
                'flat parameter vector has the wrong length',
                details={'expected': self.parameter_count, 'got': list(vector.shape)}
            )
        weights, biases, offset = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vector[offset:offset + w.size].reshape(w.shape))
            offset += w.size
            biases.append(vector[offset:offset + b.size].copy())
            offset += b.size
        return Mlp(self.sizes, weights, biases)

    def forward_with_cache(self, x):
        """Evaluate a batch and keep the layer inputs needed by ``backward``."""
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise ContractViolationError(
                f'network input must have length {self.input_size}',
                details={'shape': list(x.shape)}
            )
        activations = [x]
        out = x
        last = len(self.weights) - 1
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            out = out @ w.T + b
            if index < last:
                out = np.tanh(out)
            activations.append(out)
        return out, activations

    def backward(self, activations, upstream):
        """
        Reverse pass for sum(output * upstream) over the batch.

        Returns (flat parameter gradient, input gradient of shape (B, input_size)).
        """
        if upstream.shape != activations[-1].shape:
            raise ContractViolationError(
                'upstream gradient does not match the network output',
                details={'expected': list(activations[-1].shape), 'got': list(upstream.shape)}
            )
        grads = [None] * (2 * len(self.weights))
        delta = upstream
        for index in range(len(self.weights) - 1, -1, -1):
            layer_input = activations[index]
            grads[2 * index] = (delta.T @ layer_input).ravel()
            grads[2 * index + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[index]
            if index > 0:
                delta = delta * (1.0 - layer_input * layer_input)
        return np.concatenate(grads), delta


class Certificate:
    """V(x) = w(x)^T w(x) with a certified level ``level``."""

    def __init__(self, net, level):
        if not level > 0:
            raise ContractViolationError('certificate level must be positive', details={'level': level})
        self.net = net
        self.level = float(level)

    @classmethod
    def initialize(cls, state_dim, hidden, output_dim, level, rng):
        return cls(Mlp.initialize([state_dim, *hidden, output_dim], rng), level)

    @property
    def state_dim(self):
        return self.net.input_size

    def copy(self):
        return Certificate(self.net.copy(), self.level)

    def with_flat(self, vector):
        return Certificate(self.net.with_flat(vector), self.level)

    def value_with_cache(self, x):
        w, activations = self.net.forward_with_cache(x)
        return np.sum(w * w, axis=1), (w, activations)

    def values(self, x):
        return self.value_with_cache(x)[0]

    def backward(self, cache, upstream):
        """Gradients of sum(V * upstream): (flat parameter gradient, dV/dx weighted by upstream)."""
        w, activations = cache
        return self.net.backward(activations, 2.0 * w * upstream[:, None])

    def input_gradient(self, x):
        """V and dV/dx for a batch."""
        values, cache = self.value_with_cache(x)
        _, grad = self.backward(cache, np.ones_like(values))
        return values, grad


class Policy:
    """u = mid + half * tanh(net(x)), strictly inside the input box."""

    def __init__(self, net, lower, upper):
        self.net = net
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != (net.output_size,) or self.upper.shape != (net.output_size,):
            raise ContractViolationError('input box does not match the policy output size')
        if np.any(self.lower >= self.upper):
            raise ContractViolationError('input box lower bounds must be below upper bounds')

    @classmethod
    def initialize(cls, state_dim, hidden, lower, upper, rng):
        return cls(Mlp.initialize([state_dim, *hidden, len(lower)], rng), lower, upper)

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self):
        return 0.5 * (self.upper - self.lower)

    def copy(self):
        return Policy(self.net.copy(), self.lower, self.upper)

    def with_flat(self, vector):
        return Policy(self.net.with_flat(vector), self.lower, self.upper)

    def action_with_cache(self, x):
        raw, activations = self.net.forward_with_cache(x)
        squashed = np.tanh(raw)
        return self.midpoint + self.half_width * squashed, (squashed, activations)

    def actions(self, x):
        return self.action_with_cache(x)[0]

    def backward(self, cache, upstream):
        """Gradients of sum(u * upstream): (flat parameter gradient, input gradient)."""
        squashed, activations = cache
        return self.net.backward(activations, upstream * self.half_width * (1.0 - squashed * squashed))


def _batch(net, x):
    array = np.asarray(x, dtype=float)
    single = array.ndim == 1
    return (array[None, :] if single else array), single


def forward(net, x):
    batch, single = _batch(net, x)
    out, _ = net.forward_with_cache(batch)
    return out[0] if single else out


def backward(net, x, upstream):
    """(parameter gradient, input gradient) of output . upstream."""
    batch, single = _batch(net, x)
    upstream = np.asarray(upstream, dtype=float)
    if single:
        upstream = upstream[None, :]
    _, activations = net.forward_with_cache(batch)
    params, inputs = net.backward(activations, upstream)
    return params, (inputs[0] if single else inputs)


def certificate_value(cert, x):
    batch, single = _batch(cert.net, x)
    values = cert.values(batch)
    return float(values[0]) if single else values


def policy_action(policy, x, box=None):
    """Squashed action; ``box`` = (lower, upper) overrides the policy's own box."""
    if box is not None:
        policy = Policy(policy.net, *box)
    batch, single = _batch(policy.net, x)
    actions = policy.actions(batch)
    return actions[0] if single else actions
