"""
Single-shooting rollouts of the finite-horizon problem.

The decision vector is the input sequence only; states come from repeated
application of the task dynamics. Gradients with respect to every input are
obtained by one reverse (adjoint) sweep through the dynamics Jacobians.
"""
import logging
from dataclasses import dataclass

import numpy as np

from Certmpc.dynamics.tasks import as_batch
from Certmpc.exceptions import ContractViolationError, SolverFailureError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RolloutResult:
    states: np.ndarray
    objective: float
    gradient: np.ndarray
    stage_costs: np.ndarray
    terminal_value: float


def check_inputs(task, inputs, horizon=None):
    inputs, _ = as_batch(inputs, task.input_dim, 'inputs')
    if horizon is not None and len(inputs) != horizon:
        raise ContractViolationError(
            f'input sequence must have length {horizon}',
            details={'expected': horizon, 'got': len(inputs)}
        )
    return inputs


def simulate(task, x0, inputs):
    """States x_0..x_N under ``inputs``; raises on the first non-finite state."""
    x0 = np.asarray(x0, dtype=float)
    inputs = check_inputs(task, inputs)
    states = np.empty((len(inputs) + 1, task.state_dim))
    states[0] = x0
    for k, u in enumerate(inputs):
        states[k + 1] = task.dynamics(states[k][None, :], u[None, :])[0]
        if not np.all(np.isfinite(states[k + 1])):
            raise SolverFailureError(
                'rollout produced a non-finite state',
                details={'step': k + 1, 'input': u.tolist()}
            )
    return states


def discount_weights(task, horizon, time=0, normalize=True):
    """gamma^(t+k) for k = 0..N; with ``normalize`` the common factor gamma^t is dropped."""
    offset = 0 if normalize else time
    return task.discount ** (offset + np.arange(horizon + 1))


def backpropagate(task, states, inputs, state_grads, input_grads):
    """
    Total derivative of a scalar function of (states, inputs) with respect
    to the inputs, given its partial derivatives.

    ``state_grads`` has shape (N + 1, n) and ``input_grads`` (N, m); the
    gradient with respect to x_0 is ignored since x_0 is fixed.
    """
    state_jac, input_jac = task.dynamics.jacobians(states[:-1], inputs)
    adjoint = state_grads[-1].copy()
    grad = np.empty_like(inputs)
    for k in range(len(inputs) - 1, -1, -1):
        grad[k] = input_grads[k] + input_jac[k].T @ adjoint
        adjoint = state_grads[k] + state_jac[k].T @ adjoint
    return grad


def rollout(task, terminal, x0, inputs, time=0, normalize=True):
    """
    Objective sum_k gamma^k l(x_k, u_k) + gamma^N T(x_N) and its input gradient.

    ``terminal`` provides ``value_and_gradient(state) -> (value, dT/dx)``.
    """
    inputs = check_inputs(task, inputs)
    states = simulate(task, x0, inputs)
    weights = discount_weights(task, len(inputs), time, normalize)

    costs = task.stage_cost(states[:-1], inputs)
    cost_x, cost_u = task.stage_cost.gradients(states[:-1], inputs)
    terminal_value, terminal_grad = terminal.value_and_gradient(states[-1])

    objective = float(np.dot(weights[:-1], costs) + weights[-1] * terminal_value)
    state_grads = np.zeros_like(states)
    state_grads[:-1] = weights[:-1, None] * cost_x
    state_grads[-1] = weights[-1] * terminal_grad
    gradient = backpropagate(task, states, inputs, state_grads, weights[:-1, None] * cost_u)
    return RolloutResult(states, objective, gradient, costs, float(terminal_value))
