import logging
from dataclasses import dataclass, field

import numpy as np

from Certmpc.exceptions import ConfigurationError, ContractViolationError

logger = logging.getLogger(__name__)

METHODS = ('sgd', 'adam')


@dataclass
class OptimizerState:
    """First-order optimizer over a flat parameter vector."""
    method: str = 'adam'
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    first_moment: np.ndarray = None
    second_moment: np.ndarray = None
    step_count: int = 0
    rejected_steps: int = 0
    last_rejected: bool = field(default=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(errors=[f'optimizer: must be one of {", ".join(METHODS)}.'])
        if not self.learning_rate > 0:
            raise ConfigurationError(errors=['learning_rate: must be positive.'])


def optimizer_step(state, params, grads):
    """
    One SGD or bias-corrected Adam update.

    A gradient with non-finite entries leaves ``params`` and the moments
    untouched; the rejection is counted on the state and logged.
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape:
        raise ContractViolationError(
            'gradient shape does not match parameters',
            details={'params': list(params.shape), 'grads': list(grads.shape)}
        )

    if not np.all(np.isfinite(grads)):
        state.rejected_steps += 1
        state.last_rejected = True
        logger.warning('Rejected optimizer step %d: non-finite gradient', state.step_count + 1)
        return params
    state.last_rejected = False

    if state.method == 'sgd':
        state.step_count += 1
        return params - state.learning_rate * grads

    if state.first_moment is None or state.first_moment.shape != params.shape:
        state.first_moment = np.zeros_like(params)
        state.second_moment = np.zeros_like(params)
    state.step_count += 1
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = state.first_moment / (1.0 - state.beta1 ** state.step_count)
    v_hat = state.second_moment / (1.0 - state.beta2 ** state.step_count)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
