"""
Certificate training with periodic sampling-based validation.

Every ``k_val`` optimizer steps a fresh uniform sample of the domain is
checked against the certificate conditions; violating states are routed to
the safe or unsafe sample set by region membership and training continues
on the enlarged sets.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from Certmpc.exceptions import ConfigurationError, ContractViolationError
from Certmpc.neural.networks import Certificate, Policy
from Certmpc.neural.optimizers import OptimizerState, optimizer_step
from .losses import LossWeights, batch_loss
from .regions import SAFE_SOURCES, construct_regions

logger = logging.getLogger(__name__)

CONDITIONS = ('positivity', 'safe_level', 'unsafe_level', 'decrease', 'discounted_decrease', 'data')


@dataclass(frozen=True)
class TrainerConfig:
    iterations: int = 20000
    k_val: int = 100
    n_test: int = 10000
    n_safe: int = 2000
    n_unsafe: int = 2000
    batch_size: int = 512
    learning_rate: float = 1e-3
    optimizer: str = 'adam'
    certificate_hidden: tuple = (32, 32)
    policy_hidden: tuple = (16, 16)
    certificate_output_dim: int = 1
    seed: int = 0
    alpha: float = None
    inflate: float = 0.25
    theta_jitter: float = 0.2
    safe_source: str = 'alpha_shape'
    max_counterexamples: int = 1000

    def __post_init__(self):
        errors = []
        if self.k_val < 1:
            errors.append('k_val: must be at least 1.')
        if self.n_test < 1:
            errors.append('n_test: must be at least 1.')
        if self.iterations < 0:
            errors.append('iterations: must not be negative.')
        if self.batch_size < 1:
            errors.append('batch_size: must be at least 1.')
        if self.safe_source not in SAFE_SOURCES:
            errors.append(f'safe_source: must be one of {", ".join(SAFE_SOURCES)}.')
        if errors:
            raise ConfigurationError(errors=errors)


@dataclass(frozen=True, eq=False)
class ConditionReport:
    """Per-condition violation counts, rates and worst residuals on one sample set."""
    samples: int
    pairs: int
    counts: dict
    rates: dict
    worst: dict
    goal_value: float
    violation_rate: float
    overall_rate: float

    def as_dict(self):
        return {
            'samples': self.samples,
            'pairs': self.pairs,
            'counts': self.counts,
            'rates': self.rates,
            'worst': self.worst,
            'goal_value': self.goal_value,
            'violation_rate': self.violation_rate,
            'overall_rate': self.overall_rate,
        }


@dataclass(frozen=True, eq=False)
class Counterexamples:
    states: np.ndarray
    is_safe: np.ndarray
    report: ConditionReport

    def __len__(self):
        return len(self.states)

    @property
    def safe(self):
        return self.states[self.is_safe]

    @property
    def unsafe(self):
        return self.states[~self.is_safe]


@dataclass(frozen=True)
class ViolationBounds:
    delta1: float
    delta2: float
    delta1_samples: int
    delta2_samples: int


@dataclass(frozen=True)
class ContainmentReport:
    fraction: float
    violations: int
    previous_region: int
    samples: int


@dataclass(eq=False)
class TrainingResult:
    certificate: Certificate
    policy: Policy
    bounds: ViolationBounds
    regions: object
    report: ConditionReport
    history: list = field(default_factory=list)


def uniform_states(task, count, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(task.domain_lower, task.domain_upper, size=(count, task.state_dim))


def discounted_decrease(cert, policy, task, states):
    """gamma V(f(x, pi(x))) - V(x) + l(x, pi(x)) for a batch."""
    actions = policy.actions(states)
    successors = task.dynamics(states, actions)
    return (task.discount * cert.values(successors) - cert.values(states)
            + task.stage_cost(states, actions)), successors


def data_residuals(cert, task, transitions):
    """-(gamma V(x_k+1) - V(x_k) + l(x_k, u_k)); positive means violated."""
    x_k, u_k, x_next = transitions
    if not len(x_k):
        return np.empty(0)
    return -(task.discount * cert.values(x_next) - cert.values(x_k) + task.stage_cost(x_k, u_k))


def condition_residuals(cert, policy, task, states, is_safe):
    """Residual per condition; positive is a violation, and zero also violates the strict conditions."""
    level = cert.level
    values = cert.values(states)
    actions = policy.actions(states)
    successors = task.dynamics(states, actions)
    v_succ = cert.values(successors)
    costs = task.stage_cost(states, actions)
    off_goal = np.linalg.norm(states - task.goal, axis=1) > 1e-9
    nan = np.full(len(states), np.nan)
    return {
        'positivity': np.where(off_goal, -values, nan),
        'safe_level': np.where(is_safe, values - level, nan),
        'unsafe_level': np.where(~is_safe, level - values, nan),
        'decrease': np.where(is_safe, v_succ - values, nan),
        'discounted_decrease': np.where(is_safe, task.discount * v_succ - values + costs, nan),
    }


def _violated(name, residual):
    valid = ~np.isnan(residual)
    flags = np.zeros(len(residual), dtype=bool)
    if name in ('positivity', 'unsafe_level'):
        flags[valid] = residual[valid] >= 0
    else:
        flags[valid] = residual[valid] > 0
    return flags


def condition_report(cert, policy, task, regions, states, transitions=None):
    """Evaluate every certificate condition on ``states`` (and data pairs)."""
    is_safe = regions.label(task, states)
    residuals = condition_residuals(cert, policy, task, states, is_safe)
    any_violation = np.zeros(len(states), dtype=bool)
    counts, rates, worst = {}, {}, {}
    for name, residual in residuals.items():
        flags = _violated(name, residual)
        any_violation |= flags
        applicable = int(np.sum(~np.isnan(residual)))
        counts[name] = int(flags.sum())
        rates[name] = counts[name] / applicable if applicable else 0.0
        worst[name] = float(np.nanmax(residual)) if applicable else 0.0

    pair_residual = data_residuals(cert, task, transitions) if transitions is not None else np.empty(0)
    pair_flags = pair_residual > 0
    counts['data'] = int(pair_flags.sum())
    rates['data'] = counts['data'] / len(pair_residual) if len(pair_residual) else 0.0
    worst['data'] = float(np.max(pair_residual)) if len(pair_residual) else 0.0

    sample_violations = int(any_violation.sum())
    report = ConditionReport(
        samples=len(states),
        pairs=len(pair_residual),
        counts=counts,
        rates=rates,
        worst=worst,
        goal_value=float(cert.values(task.goal[None, :])[0]),
        violation_rate=sample_violations / len(states) if len(states) else 0.0,
        overall_rate=(sample_violations + counts['data']) / max(len(states) + len(pair_residual), 1),
    )
    return report, any_violation, is_safe


def validate_and_mine(cert, policy, task, regions, n_test, seed, transitions=None):
    """Uniform validation sample; returns the violating states labeled safe/unsafe."""
    states = uniform_states(task, n_test, seed)
    report, violating, is_safe = condition_report(cert, policy, task, regions, states, transitions)
    return Counterexamples(states[violating], is_safe[violating], report)


def estimate_violation_bounds(cert, policy, data, task, n_test, seed):
    """
    delta1: worst discounted-decrease residual over every uniform validation
    sample; delta2: worst violation of the data condition over
    every recorded transition. Both clipped below at zero.
    """
    states = uniform_states(task, n_test, seed)
    residual, _ = discounted_decrease(cert, policy, task, states)
    delta1 = max(float(np.max(residual)), 0.0) if len(residual) else 0.0

    transitions = data.transitions(task.state_dim, task.input_dim)
    residual = data_residuals(cert, task, transitions)
    if len(residual):
        delta2 = max(float(np.max(residual)), 0.0)
    else:
        logger.warning('No recorded transitions; delta2 defaults to 0')
        delta2 = 0.0
    return ViolationBounds(delta1, delta2, len(states), len(residual))


def terminal_delta1(cert, policy, task, state):
    """Discounted-decrease residual at one state, clipped below at zero."""
    residual, _ = discounted_decrease(cert, policy, task, np.atleast_2d(state))
    return max(float(residual[0]), 0.0)


def check_containment(cert_prev, cert_new, level, samples):
    """Fraction of samples with V_prev <= c but V_new > c."""
    if cert_prev.state_dim != cert_new.state_dim:
        raise ContractViolationError('certificates differ in state dimension')
    previous = cert_prev.values(samples) <= level
    lost = previous & (cert_new.values(samples) > level)
    return ContainmentReport(
        fraction=float(lost.sum()) / len(samples) if len(samples) else 0.0,
        violations=int(lost.sum()),
        previous_region=int(previous.sum()),
        samples=len(samples),
    )


def _minibatch(rng, array, size):
    if len(array) <= size:
        return array
    return array[rng.choice(len(array), size=size, replace=False)]


def initial_networks(task, config, rng):
    cert = Certificate.initialize(task.state_dim, config.certificate_hidden,
                                  config.certificate_output_dim, task.level, rng)
    policy = Policy.initialize(task.state_dim, config.policy_hidden, task.input_lower, task.input_upper, rng)
    return cert, policy


def train_certificate(data, task, config, weights=None, previous=None):
    """
    Fit a certificate and policy to ``data``.

    ``previous`` is an optional (Certificate, Policy) pair used as the
    starting point.
    """
    weights = weights or LossWeights.for_task(task)
    rng = np.random.default_rng(config.seed)
    regions = construct_regions(
        data, task,
        alpha=config.alpha,
        counts=(config.n_safe, config.n_unsafe),
        rng=rng,
        inflate=config.inflate,
        theta_jitter=config.theta_jitter,
        safe_source=config.safe_source,
    )
    transitions = data.transitions(task.state_dim, task.input_dim)

    if previous is not None:
        cert, policy = previous[0].copy(), previous[1].copy()
        logger.info('Warm-starting certificate training from previous parameters')
    else:
        cert, policy = initial_networks(task, config, rng)

    cert_opt = OptimizerState(method=config.optimizer, learning_rate=config.learning_rate)
    policy_opt = OptimizerState(method=config.optimizer, learning_rate=config.learning_rate)
    history = []
    for step in range(1, config.iterations + 1):
        batch_transitions = transitions
        if len(transitions[0]) > config.batch_size:
            chosen = rng.choice(len(transitions[0]), size=config.batch_size, replace=False)
            batch_transitions = tuple(array[chosen] for array in transitions)
        result = batch_loss(
            cert, policy,
            _minibatch(rng, regions.safe, config.batch_size),
            _minibatch(rng, regions.unsafe, config.batch_size),
            batch_transitions, weights, task,
        )
        cert = cert.with_flat(optimizer_step(cert_opt, cert.net.flat(), result.certificate_grad))
        policy = policy.with_flat(optimizer_step(policy_opt, policy.net.flat(), result.policy_grad))

        if step % config.k_val == 0:
            mined = validate_and_mine(cert, policy, task, regions, config.n_test,
                                      config.seed + step, transitions)
            kept = mined.states[:config.max_counterexamples]
            kept_safe = mined.is_safe[:config.max_counterexamples]
            regions = regions.augmented(kept[kept_safe], kept[~kept_safe])
            history.append({
                'step': step,
                'loss': result.value,
                'violation_rate': mined.report.violation_rate,
                'counterexamples': len(mined),
            })
            logger.info('Step %d: loss %.6f, violation rate %.4f, %d counterexamples',
                        step, result.value, mined.report.violation_rate, len(mined))

    final_seed = config.seed + config.iterations + 1
    report, _, _ = condition_report(cert, policy, task, regions,
                                    uniform_states(task, config.n_test, final_seed), transitions)
    bounds = estimate_violation_bounds(cert, policy, data, task, config.n_test, final_seed + 1)
    logger.info('Training finished: V(x_F)=%.2e, violation rate %.4f, delta1 %.4g, delta2 %.4g',
                report.goal_value, report.overall_rate, bounds.delta1, bounds.delta2)
    return TrainingResult(cert, policy, bounds, regions, report, history)
