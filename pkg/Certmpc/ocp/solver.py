"""
Finite-horizon MPC solver.

Single shooting over the input sequence. Inequality constraints (obstacle
clearance and domain box on the predicted states, V(x_N) <= c at the end of
the horizon) and the optional terminal equality of the baseline are handled
by an augmented Lagrangian; each inner problem is a bound-constrained
L-BFGS-B solve with the input box as bounds.
"""
import logging
import time as clock
from dataclasses import dataclass, field, replace

import numpy as np
from django.conf import settings
from scipy.optimize import minimize

from Certmpc.exceptions import ConfigurationError, ContractViolationError, SolverFailureError
from .rollout import backpropagate, check_inputs, discount_weights, simulate

logger = logging.getLogger(__name__)

CONVERGED = 'converged'
MAX_ITER = 'max_iter'
FALLBACK = 'infeasible_fallback'
SOLVER_STATUSES = (CONVERGED, MAX_ITER, FALLBACK)

COLD = 'cold'
PREVIOUS = 'previous'


@dataclass(frozen=True)
class SolverConfig:
    kkt_tol: float = 1e-6
    constraint_tol: float = 1e-6
    fallback_tol: float = 1e-3
    max_outer: int = 6
    max_inner: int = 200
    lbfgs_memory: int = 10
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    obstacle_margin: float = 0.01
    terminal_obstacle: bool = False
    normalize_discount: bool = True
    step_budget_ms: float = 100.0

    def __post_init__(self):
        errors = []
        for name in ('kkt_tol', 'constraint_tol', 'fallback_tol', 'initial_penalty', 'step_budget_ms'):
            if not getattr(self, name) > 0:
                errors.append(f'{name}: must be positive.')
        for name in ('max_outer', 'max_inner', 'lbfgs_memory'):
            if getattr(self, name) < 1:
                errors.append(f'{name}: must be at least 1.')
        if not self.penalty_growth >= 1:
            errors.append('penalty_growth: must be at least 1.')
        if self.obstacle_margin < 0:
            errors.append('obstacle_margin: must not be negative.')
        if errors:
            raise ConfigurationError(errors=errors)

    @classmethod
    def from_settings(cls, **overrides):
        defaults = settings.CERTMPC
        params = {
            'kkt_tol': defaults['KKT_TOL'],
            'constraint_tol': defaults['CONSTRAINT_TOL'],
            'max_outer': defaults['MAX_OUTER'],
            'max_inner': defaults['MAX_INNER'],
            'lbfgs_memory': defaults['LBFGS_MEMORY'],
            'initial_penalty': defaults['INITIAL_PENALTY'],
            'penalty_growth': defaults['PENALTY_GROWTH'],
            'obstacle_margin': defaults['OBSTACLE_MARGIN'],
            'terminal_obstacle': defaults['TERMINAL_OBSTACLE'],
            'normalize_discount': defaults['NORMALIZE_DISCOUNT'],
            'step_budget_ms': defaults['STEP_BUDGET_MS'],
        }
        params.update(overrides)
        return cls(**params)


class CertificateTerminal:
    """Terminal cost V(x_N) and terminal constraint V(x_N) - c <= 0."""
    equality = False

    def __init__(self, certificate):
        self.certificate = certificate

    @property
    def level(self):
        return self.certificate.level

    def value_and_gradient(self, state):
        values, grads = self.certificate.input_gradient(np.atleast_2d(state))
        return float(values[0]), grads[0]

    def constraint(self, state):
        """Residual and its state Jacobian, shapes (1,) and (1, n)."""
        value, grad = self.value_and_gradient(state)
        return np.array([value - self.level]), grad[None, :]


class PointTerminal:
    """Terminal equality x_N = target with a constant terminal cost."""
    equality = True

    def __init__(self, target, cost):
        self.target = np.asarray(target, dtype=float)
        self.cost = float(cost)

    def value_and_gradient(self, state):
        return self.cost, np.zeros_like(self.target)

    def constraint(self, state):
        return np.asarray(state, dtype=float) - self.target, np.eye(len(self.target))


@dataclass(frozen=True, eq=False)
class OcpProblem:
    task: object
    terminal: object
    state: np.ndarray
    time: int = 0
    horizon: int = None
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        object.__setattr__(self, 'state', np.asarray(self.state, dtype=float))
        if self.horizon is None:
            object.__setattr__(self, 'horizon', self.task.horizon)
        if self.state.shape != (self.task.state_dim,):
            raise ContractViolationError(
                f'state must have length {self.task.state_dim}',
                details={'shape': list(self.state.shape)}
            )
        if self.horizon < 1:
            raise ContractViolationError('horizon must be at least 1', details={'horizon': self.horizon})

    def weights(self):
        return discount_weights(self.task, self.horizon, self.time, self.config.normalize_discount)

    def bounds(self):
        lower = np.tile(self.task.input_lower, self.horizon)
        upper = np.tile(self.task.input_upper, self.horizon)
        return list(zip(lower, upper))

    def constrained_steps(self):
        """Indices of predicted states under the state constraints."""
        last = self.horizon + 1 if self.config.terminal_obstacle else self.horizon
        return np.arange(1, last)


@dataclass(frozen=True, eq=False)
class WarmStart:
    inputs: np.ndarray
    origin: str = COLD
    tail_action: np.ndarray = None


@dataclass(frozen=True, eq=False)
class OcpSolution:
    inputs: np.ndarray
    states: np.ndarray
    objective: float
    status: str
    iterations: int
    outer_iterations: int
    wall_time_ms: float
    residuals: dict

    @property
    def predicted(self):
        return self.states[1:]

    @property
    def terminal_state(self):
        return self.states[-1]

    @property
    def first_input(self):
        return self.inputs[0]

    def diagnostics(self):
        return {
            'status': self.status,
            'objective': self.objective,
            'iterations': self.iterations,
            'outer_iterations': self.outer_iterations,
            'wall_time_ms': self.wall_time_ms,
            'residuals': self.residuals,
            'inputs': self.inputs.tolist(),
            'states': self.states.tolist(),
        }


def state_constraints(problem, states):
    """
    Inequality residuals g(x_k) <= 0 on the constrained steps.

    Returns (values (K, q), jacobians (K, q, n)) with one obstacle residual
    (r + margin)^2 - |xy - center|^2 per obstacle followed by the box residuals.
    """
    task = problem.task
    steps = problem.constrained_steps()
    chosen = states[steps]
    n = task.state_dim
    values, jacobians = [], []
    for obstacle in task.obstacles:
        radius = obstacle.radius + problem.config.obstacle_margin
        offset = chosen[:, :2] - np.asarray(obstacle.center, dtype=float)
        values.append(radius ** 2 - np.sum(offset * offset, axis=1))
        jac = np.zeros((len(chosen), n))
        jac[:, :2] = -2.0 * offset
        jacobians.append(jac)
    eye = np.eye(n)
    for index in range(n):
        values.append(chosen[:, index] - task.domain_upper[index])
        jacobians.append(np.tile(eye[index], (len(chosen), 1)))
        values.append(task.domain_lower[index] - chosen[:, index])
        jacobians.append(np.tile(-eye[index], (len(chosen), 1)))
    return np.stack(values, axis=1), np.stack(jacobians, axis=1)


def constraint_residuals(problem, inputs, states=None):
    """Worst residual per constraint family for an input sequence."""
    inputs = check_inputs(problem.task, inputs, problem.horizon)
    states = simulate(problem.task, problem.state, inputs) if states is None else states
    values, _ = state_constraints(problem, states)
    terminal, _ = problem.terminal.constraint(states[-1])
    obstacle_count = len(problem.task.obstacles)
    box_out = np.maximum(problem.task.input_lower - inputs, inputs - problem.task.input_upper)
    return {
        'dynamics': 0.0,
        'obstacle': float(np.max(values[:, :obstacle_count])) if values.size and obstacle_count else -np.inf,
        'domain': float(np.max(values[:, obstacle_count:])) if values.size else -np.inf,
        'terminal': float(np.max(np.abs(terminal)) if problem.terminal.equality else terminal[0]),
        'input_box': float(np.max(box_out)),
    }


def max_violation(residuals):
    return max(0.0, residuals['obstacle'], residuals['domain'], residuals['terminal'], residuals['input_box'])


class AugmentedLagrangian:
    """Merit function of the input sequence for fixed multipliers and penalty."""

    def __init__(self, problem):
        self.problem = problem
        self.weights = problem.weights()
        self.evaluations = 0

    def objective(self, inputs, states):
        task = self.problem.task
        costs = task.stage_cost(states[:-1], inputs)
        terminal_value, _ = self.problem.terminal.value_and_gradient(states[-1])
        return float(np.dot(self.weights[:-1], costs) + self.weights[-1] * terminal_value)

    def __call__(self, flat, state_multipliers, terminal_multipliers, penalty):
        problem, task = self.problem, self.problem.task
        self.evaluations += 1
        inputs = flat.reshape(problem.horizon, task.input_dim)
        states = simulate(task, problem.state, inputs)
        weights = self.weights

        costs = task.stage_cost(states[:-1], inputs)
        cost_x, cost_u = task.stage_cost.gradients(states[:-1], inputs)
        terminal_value, terminal_grad = problem.terminal.value_and_gradient(states[-1])
        merit = float(np.dot(weights[:-1], costs) + weights[-1] * terminal_value)
        state_grads = np.zeros_like(states)
        state_grads[:-1] = weights[:-1, None] * cost_x
        state_grads[-1] = weights[-1] * terminal_grad

        values, jacobians = state_constraints(problem, states)
        shifted = np.maximum(0.0, state_multipliers + penalty * values)
        merit += float(np.sum(shifted ** 2 - state_multipliers ** 2)) / (2.0 * penalty)
        np.add.at(state_grads, problem.constrained_steps(), np.einsum('kq,kqn->kn', shifted, jacobians))

        residual, jacobian = problem.terminal.constraint(states[-1])
        if problem.terminal.equality:
            merit += float(np.dot(terminal_multipliers, residual) + 0.5 * penalty * np.dot(residual, residual))
            state_grads[-1] += (terminal_multipliers + penalty * residual) @ jacobian
        else:
            active = np.maximum(0.0, terminal_multipliers + penalty * residual)
            merit += float(np.sum(active ** 2 - terminal_multipliers ** 2)) / (2.0 * penalty)
            state_grads[-1] += active @ jacobian

        grad = backpropagate(task, states, inputs, state_grads, weights[:-1, None] * cost_u)
        return merit, grad.ravel()


def projected_gradient_norm(flat, grad, bounds):
    lower, upper = np.array(bounds).T
    return float(np.max(np.abs(flat - np.clip(flat - grad, lower, upper)))) if flat.size else 0.0


def solve(problem, warm):
    """
    Solve the finite-horizon problem from ``warm``.

    When the outer loop ends infeasible, the warm-start sequence is returned
    with status ``infeasible_fallback``; if the warm start itself violates
    the constraints beyond ``fallback_tol`` a SolverFailureError is raised.
    """
    config, task = problem.config, problem.task
    started = clock.perf_counter()
    warm_inputs = check_inputs(task, warm.inputs, problem.horizon)
    bounds = problem.bounds()
    merit = AugmentedLagrangian(problem)

    flat = np.clip(warm_inputs.ravel(), *np.array(bounds).T)
    state_multipliers = np.zeros((len(problem.constrained_steps()), len(task.obstacles) + 2 * task.state_dim))
    terminal_multipliers = np.zeros(task.state_dim if problem.terminal.equality else 1)
    penalty = config.initial_penalty
    inner_total, status, outer = 0, MAX_ITER, 0

    for outer in range(1, config.max_outer + 1):
        result = minimize(
            merit, flat, args=(state_multipliers, terminal_multipliers, penalty),
            jac=True, method='L-BFGS-B', bounds=bounds,
            options={'maxiter': config.max_inner, 'maxcor': config.lbfgs_memory,
                     'gtol': config.kkt_tol, 'ftol': 1e-15},
        )
        flat = np.clip(result.x, *np.array(bounds).T)
        inner_total += int(result.nit)
        _, grad = merit(flat, state_multipliers, terminal_multipliers, penalty)
        kkt = projected_gradient_norm(flat, grad, bounds)

        states = simulate(task, problem.state, flat.reshape(problem.horizon, task.input_dim))
        values, _ = state_constraints(problem, states)
        residual, _ = problem.terminal.constraint(states[-1])
        state_multipliers = np.maximum(0.0, state_multipliers + penalty * values)
        if problem.terminal.equality:
            terminal_multipliers = terminal_multipliers + penalty * residual
            terminal_violation = float(np.max(np.abs(residual)))
        else:
            terminal_multipliers = np.maximum(0.0, terminal_multipliers + penalty * residual)
            terminal_violation = max(float(residual[0]), 0.0)
        violation = max(float(np.max(values, initial=0.0)), terminal_violation, 0.0)
        logger.debug('Outer %d: violation %.3e, kkt %.3e, penalty %.1e', outer, violation, kkt, penalty)
        if violation <= config.constraint_tol and kkt <= config.kkt_tol:
            status = CONVERGED
            break
        penalty *= config.penalty_growth

    inputs = flat.reshape(problem.horizon, task.input_dim)
    states = simulate(task, problem.state, inputs)
    residuals = constraint_residuals(problem, inputs, states)
    if max_violation(residuals) > config.constraint_tol:
        return fallback(problem, warm_inputs, started, inner_total, outer, residuals)

    wall_ms = (clock.perf_counter() - started) * 1000.0
    if wall_ms > config.step_budget_ms:
        logger.debug('Solve took %.1f ms, above the %.1f ms budget', wall_ms, config.step_budget_ms)
    return OcpSolution(inputs, states, merit.objective(inputs, states), status,
                       inner_total, outer, wall_ms, residuals)


def fallback(problem, warm_inputs, started, inner_total, outer, failed_residuals):
    """Return the warm-start sequence, or raise when it is infeasible too."""
    states = simulate(problem.task, problem.state, warm_inputs)
    residuals = constraint_residuals(problem, warm_inputs, states)
    if max_violation(residuals) > problem.config.fallback_tol:
        raise SolverFailureError(
            'solver failed and the warm start is infeasible',
            details={'state': problem.state.tolist(), 'time': problem.time,
                     'solution_residuals': failed_residuals, 'warm_residuals': residuals}
        )
    logger.warning('Solver did not reach feasibility at t=%d (violation %.3e); using the warm start',
                   problem.time, max_violation(failed_residuals))
    merit = AugmentedLagrangian(problem)
    wall_ms = (clock.perf_counter() - started) * 1000.0
    return OcpSolution(warm_inputs.copy(), states, merit.objective(warm_inputs, states), FALLBACK,
                       inner_total, outer, wall_ms, residuals)


def cold_start(task, policy, state, horizon=None):
    """Roll the policy forward from ``state`` for the first solve of an iteration."""
    horizon = task.horizon if horizon is None else horizon
    x = np.asarray(state, dtype=float)
    inputs = np.empty((horizon, task.input_dim))
    for k in range(horizon):
        inputs[k] = policy.actions(x[None, :])[0]
        x = task.dynamics(x[None, :], inputs[k][None, :])[0]
    return WarmStart(inputs, COLD)


def make_warm_start(previous, policy, task):
    """Drop u*_t, shift the rest and append the policy action at the predicted terminal state."""
    if previous.status not in (CONVERGED, FALLBACK, MAX_ITER):
        raise ContractViolationError('unknown solution status', details={'status': previous.status})
    tail = policy.actions(previous.terminal_state[None, :])[0]
    tail = np.clip(tail, task.input_lower, task.input_upper)
    return WarmStart(np.vstack([previous.inputs[1:], tail]), PREVIOUS, tail)


def mpc_step(problem, warm, policy):
    """Solve, then return (applied input, next warm start, solution)."""
    solution = solve(problem, warm)
    return solution.first_input.copy(), make_warm_start(solution, policy, problem.task), solution


def with_state(problem, state, time):
    return replace(problem, state=np.asarray(state, dtype=float), time=time)
