"""
Training loss for the certificate/policy pair.

    V(x_F)^2
    + a1 / N_safe   * sum_safe   [V(x) - c]+
    + a2 / N_unsafe * sum_unsafe [c - V(x)]+
    + a3 / N_safe   * sum_safe   [V(f(x, pi(x))) - V(x)]+
    + a4 / N_safe   * sum_safe   [gamma V(f(x, pi(x))) - V(x) + l(x, pi(x))]+
    + a5 * mean_pairs            [-gamma V(x_k+1) + V(x_k) - l(x_k, u_k)]+

Gradients are exact; the policy gradient flows through the dynamics Jacobian.
"""
import logging
from dataclasses import dataclass

import numpy as np

from Certmpc.exceptions import ContractViolationError, TrainingDivergenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    a1: float = 1.0
    a2: float = 1.0
    a3: float = 1.0
    a4: float = 1.0
    a5: float = 1.0
    level: float = 7.0
    discount: float = 0.8

    def __post_init__(self):
        for name in ('a1', 'a2', 'a3', 'a4', 'a5', 'level'):
            if not getattr(self, name) > 0:
                raise ContractViolationError(f'loss weight {name} must be positive')
        if not 0.0 < self.discount < 1.0:
            raise ContractViolationError('discount must lie strictly between 0 and 1')

    @classmethod
    def for_task(cls, task, weights=(1.0, 1.0, 1.0, 1.0, 1.0)):
        return cls(*weights, level=task.level, discount=task.discount)


@dataclass(frozen=True, eq=False)
class LossResult:
    value: float
    terms: dict
    certificate_grad: np.ndarray
    policy_grad: np.ndarray
    hinge_margin: float


def _hinge(argument, weight):
    active = argument > 0
    return weight * float(np.sum(argument[active])), weight * active


def batch_loss(cert, policy, safe, unsafe, transitions, weights, task):
    """Loss and gradients on explicit sample arrays."""
    if not len(safe) or not len(unsafe):
        raise ContractViolationError(
            'loss needs nonempty safe and unsafe samples',
            details={'safe': len(safe), 'unsafe': len(unsafe)}
        )
    x_k, u_k, x_next = transitions
    n_safe, n_unsafe, n_pairs = len(safe), len(unsafe), len(x_k)
    gamma, level = weights.discount, weights.level

    actions, policy_cache = policy.action_with_cache(safe)
    successors = task.dynamics(safe, actions)
    costs = task.stage_cost(safe, actions)
    pair_costs = task.stage_cost(x_k, u_k) if n_pairs else np.empty(0)

    stacked = np.vstack([task.goal[None, :], safe, unsafe, successors, x_k, x_next])
    values, cert_cache = cert.value_with_cache(stacked)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise TrainingDivergenceError(
            'certificate produced a non-finite value',
            details={'sample': stacked[bad].tolist(), 'value': float(values[bad])}
        )

    offsets = np.cumsum([1, n_safe, n_unsafe, n_safe, n_pairs])
    v_goal = values[0]
    v_safe = values[1:offsets[1]]
    v_unsafe = values[offsets[1]:offsets[2]]
    v_succ = values[offsets[2]:offsets[3]]
    v_k = values[offsets[3]:offsets[4]]
    v_next = values[offsets[4]:]

    arg_level = v_safe - level
    arg_unsafe = level - v_unsafe
    arg_decrease = v_succ - v_safe
    arg_discounted = gamma * v_succ - v_safe + costs
    arg_data = -gamma * v_next + v_k - pair_costs

    terms = {'goal': float(v_goal ** 2)}
    terms['safe_level'], g_level = _hinge(arg_level, weights.a1 / n_safe)
    terms['unsafe_level'], g_unsafe = _hinge(arg_unsafe, weights.a2 / n_unsafe)
    terms['decrease'], g_decrease = _hinge(arg_decrease, weights.a3 / n_safe)
    terms['discounted_decrease'], g_discounted = _hinge(arg_discounted, weights.a4 / n_safe)
    if n_pairs:
        terms['data'], g_data = _hinge(arg_data, weights.a5 / n_pairs)
    else:
        terms['data'], g_data = 0.0, np.zeros(0)
    value = float(sum(terms.values()))
    if not np.isfinite(value):
        raise TrainingDivergenceError('loss is not finite', details={'terms': terms})

    upstream = np.concatenate([
        [2.0 * v_goal],
        g_level - g_decrease - g_discounted,
        -g_unsafe,
        g_decrease + gamma * g_discounted,
        g_data,
        -gamma * g_data,
    ])
    cert_grad, state_grad = cert.backward(cert_cache, upstream)

    successor_grad = state_grad[offsets[2]:offsets[3]]
    _, input_jac = task.dynamics.jacobians(safe, actions)
    action_grad = np.einsum('bi,bij->bj', successor_grad, input_jac)
    _, cost_input_grad = task.stage_cost.gradients(safe, actions)
    action_grad += g_discounted[:, None] * cost_input_grad
    policy_grad, _ = policy.backward(policy_cache, action_grad)

    arguments = [arg_level, arg_unsafe, arg_decrease, arg_discounted, arg_data]
    margin = min((float(np.min(np.abs(arg))) for arg in arguments if arg.size), default=np.inf)
    return LossResult(value, terms, cert_grad, policy_grad, margin)


def clbf_loss(cert, policy, regions, data, weights, task):
    """Full-batch loss over the regions' samples and every transition of ``data``."""
    if not len(regions.safe) or not len(regions.unsafe):
        raise ContractViolationError('regions must hold safe and unsafe samples')
    transitions = data.transitions(task.state_dim, task.input_dim) if hasattr(data, 'transitions') else data
    return batch_loss(cert, policy, regions.safe, regions.unsafe, transitions, weights, task)
