"""
Controlled system, stage cost and constraint sets.

States and inputs are plain numpy vectors. Every function accepts either a
single vector of shape (n,) or a batch of shape (B, n) and answers in the
same form, so solvers and trainers can share one implementation.
"""
import logging
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from Certmpc.exceptions import ConfigurationError, ContractViolationError

logger = logging.getLogger(__name__)

EQUILIBRIUM_TOL = 1e-9


def as_batch(values, dim, name='state'):
    """Return ``values`` as a float array of shape (B, dim) and whether it was a single vector."""
    array = np.asarray(values, dtype=float)
    single = array.ndim == 1
    if single:
        array = array[None, :]
    if array.ndim != 2 or array.shape[1] != dim:
        raise ContractViolationError(
            f'{name} must have length {dim}',
            details={'field': name, 'shape': list(np.shape(values))}
        )
    return array, single


class DubinsDynamics:
    """Forward-Euler unicycle: [z, y, th] + dt * [v cos th, v sin th, w]."""
    state_dim = 3
    input_dim = 2

    def __init__(self, time_step):
        if not time_step > 0:
            raise ConfigurationError(errors=['time_step: must be positive.'])
        self.time_step = float(time_step)

    def with_time_step(self, time_step):
        return DubinsDynamics(time_step)

    def __call__(self, x, u):
        dt = self.time_step
        heading = x[:, 2]
        speed = u[:, 0]
        return np.stack([
            x[:, 0] + dt * speed * np.cos(heading),
            x[:, 1] + dt * speed * np.sin(heading),
            heading + dt * u[:, 1],
        ], axis=1)

    def jacobians(self, x, u):
        """Return (df/dx, df/du) with shapes (B, 3, 3) and (B, 3, 2)."""
        dt = self.time_step
        batch = x.shape[0]
        cos, sin = np.cos(x[:, 2]), np.sin(x[:, 2])
        speed = u[:, 0]

        state_jac = np.tile(np.eye(3), (batch, 1, 1))
        state_jac[:, 0, 2] = -dt * speed * sin
        state_jac[:, 1, 2] = dt * speed * cos

        input_jac = np.zeros((batch, 3, 2))
        input_jac[:, 0, 0] = dt * cos
        input_jac[:, 1, 0] = dt * sin
        input_jac[:, 2, 1] = dt
        return state_jac, input_jac


class QuadraticGoalCost:
    """weight * ||x - goal||^2; ignores the input."""

    def __init__(self, weight, goal):
        if not weight > 0:
            raise ConfigurationError(errors=['cost_weight: must be positive.'])
        self.weight = float(weight)
        self.goal = np.asarray(goal, dtype=float)

    def __call__(self, x, u):
        diff = x - self.goal
        return self.weight * np.sum(diff * diff, axis=1)

    def gradients(self, x, u):
        """Return (dl/dx, dl/du) for a batch."""
        return 2.0 * self.weight * (x - self.goal), np.zeros_like(u)

    def upper_bound(self, lower, upper):
        """Largest value over the box [lower, upper]."""
        spread = np.maximum((lower - self.goal) ** 2, (upper - self.goal) ** 2)
        return self.weight * float(np.sum(spread))


@dataclass(frozen=True)
class Obstacle:
    """Closed disc in the (z, y) plane."""
    center: tuple
    radius: float

    def __post_init__(self):
        if len(self.center) != 2:
            raise ConfigurationError(errors=['obstacles: center must have two coordinates.'])
        if not self.radius > 0:
            raise ConfigurationError(errors=['obstacles: radius must be positive.'])

    def squared_distance(self, xy):
        diff = xy - np.asarray(self.center, dtype=float)
        return np.sum(diff * diff, axis=-1)

    def contains(self, xy):
        return self.squared_distance(xy) <= self.radius ** 2


@dataclass(frozen=True, eq=False)
class TaskSpec:
    """
    Everything a solver or trainer needs to know about the control task.

    Immutable after construction; construction checks that the goal is an
    equilibrium under zero input and that start and goal are safe.
    """
    dynamics: object
    stage_cost: object
    input_lower: np.ndarray
    input_upper: np.ndarray
    domain_lower: np.ndarray
    domain_upper: np.ndarray
    goal: np.ndarray
    start: np.ndarray
    obstacles: tuple = ()
    discount: float = 0.8
    horizon: int = 15
    level: float = 7.0
    max_steps: int = 120
    goal_tolerance: float = 1e-2

    def __post_init__(self):
        for name in ('input_lower', 'input_upper', 'domain_lower', 'domain_upper', 'goal', 'start'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, 'obstacles', tuple(self.obstacles))
        self._validate()

    @property
    def state_dim(self):
        return self.dynamics.state_dim

    @property
    def input_dim(self):
        return self.dynamics.input_dim

    @property
    def time_step(self):
        return self.dynamics.time_step

    def _validate(self):
        errors = []
        n, m = self.state_dim, self.input_dim
        if self.goal.shape != (n,):
            errors.append(f'goal: must have length {n}.')
        if self.start.shape != (n,):
            errors.append(f'start: must have length {n}.')
        if self.input_lower.shape != (m,) or self.input_upper.shape != (m,):
            errors.append(f'input_box: bounds must have length {m}.')
        elif np.any(self.input_lower >= self.input_upper):
            errors.append('input_box: lower bounds must be below upper bounds.')
        if self.domain_lower.shape != (n,) or self.domain_upper.shape != (n,):
            errors.append(f'domain_box: bounds must have length {n}.')
        elif np.any(self.domain_lower >= self.domain_upper):
            errors.append('domain_box: lower bounds must be below upper bounds.')
        if not 0.0 < self.discount < 1.0:
            errors.append('discount: must lie strictly between 0 and 1.')
        if self.horizon < 1:
            errors.append('horizon: must be at least 1.')
        if not self.level > 0:
            errors.append('level: must be positive.')
        if self.max_steps < self.horizon:
            errors.append('max_steps: must be at least the horizon.')
        if errors:
            raise ConfigurationError(errors=errors)

        if in_unsafe(self, self.goal):
            errors.append('goal: lies in the unsafe set.')
        if in_unsafe(self, self.start):
            errors.append('start: lies in the unsafe set.')
        drift = np.linalg.norm(step(self, self.goal, np.zeros(m)) - self.goal)
        if drift > EQUILIBRIUM_TOL:
            errors.append(f'goal: not an equilibrium under zero input (drift {drift:.3e}).')
        if errors:
            raise ConfigurationError(errors=errors)

    def input_midpoint(self):
        return 0.5 * (self.input_lower + self.input_upper)

    def stage_cost_bound(self):
        return self.stage_cost.upper_bound(self.domain_lower, self.domain_upper)


@dataclass(frozen=True)
class WheelGeometry:
    radius: float = 0.035
    base: float = 0.23
    swap: bool = False

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigurationError(errors=['wheel_radius: must be positive.'])
        if not self.base > 0:
            raise ConfigurationError(errors=['wheel_base: must be positive.'])


@dataclass(frozen=True)
class DiscountedCost:
    value: float
    undiscounted: float
    tail_bound: float
    steps: int


def benchmark_task(**overrides):
    """Dubins reach-avoid task built from the CERTMPC settings defaults."""
    defaults = settings.CERTMPC
    params = {
        'time_step': defaults['TIME_STEP'],
        'cost_weight': defaults['COST_WEIGHT'],
        'goal': defaults['GOAL'],
        'start': defaults['START'],
        'obstacles': [(defaults['OBSTACLE_CENTER'], defaults['OBSTACLE_RADIUS'])],
        'input_lower': defaults['INPUT_LOWER'],
        'input_upper': defaults['INPUT_UPPER'],
        'domain_lower': defaults['DOMAIN_LOWER'],
        'domain_upper': defaults['DOMAIN_UPPER'],
        'discount': defaults['DISCOUNT'],
        'horizon': defaults['HORIZON'],
        'level': defaults['LEVEL'],
        'max_steps': defaults['MAX_STEPS'],
        'goal_tolerance': defaults['GOAL_TOLERANCE'],
    }
    params.update(overrides)
    return dubins_task(**params)


def dubins_task(time_step, cost_weight, goal, start, obstacles, input_lower, input_upper,
                domain_lower, domain_upper, discount, horizon, level, max_steps, goal_tolerance):
    """Assemble a Dubins TaskSpec from plain values; obstacles are (center, radius) pairs."""
    return TaskSpec(
        dynamics=DubinsDynamics(time_step),
        stage_cost=QuadraticGoalCost(cost_weight, goal),
        input_lower=input_lower,
        input_upper=input_upper,
        domain_lower=domain_lower,
        domain_upper=domain_upper,
        goal=goal,
        start=start,
        obstacles=tuple(Obstacle(tuple(center), float(radius)) for center, radius in obstacles),
        discount=discount,
        horizon=horizon,
        level=level,
        max_steps=max_steps,
        goal_tolerance=goal_tolerance,
    )


def step(task, x, u):
    """Apply the task dynamics once; theta is not wrapped."""
    states, single = as_batch(x, task.state_dim, 'state')
    inputs, _ = as_batch(u, task.input_dim, 'input')
    if inputs.shape[0] != states.shape[0]:
        raise ContractViolationError('state and input batches differ in size')
    result = task.dynamics(states, inputs)
    return result[0] if single else result


def stage_cost(task, x, u):
    states, single = as_batch(x, task.state_dim, 'state')
    inputs, _ = as_batch(u, task.input_dim, 'input')
    if inputs.shape[0] != states.shape[0]:
        if inputs.shape[0] != 1:
            raise ContractViolationError('state and input batches differ in size')
        inputs = np.repeat(inputs, states.shape[0], axis=0)
    cost = task.stage_cost(states, inputs)
    return float(cost[0]) if single else cost


def in_unsafe(task, x):
    """True where x lies in a closed obstacle disc or outside the domain box."""
    states, single = as_batch(x, task.state_dim, 'state')
    outside = np.any((states < task.domain_lower) | (states > task.domain_upper), axis=1)
    hit = np.zeros(states.shape[0], dtype=bool)
    for obstacle in task.obstacles:
        hit |= obstacle.contains(states[:, :2])
    unsafe = outside | hit
    return bool(unsafe[0]) if single else unsafe


def obstacle_clearance(task, x):
    """Smallest (distance - radius) over all obstacles; +inf without obstacles."""
    states, single = as_batch(x, task.state_dim, 'state')
    clearance = np.full(states.shape[0], np.inf)
    for obstacle in task.obstacles:
        distance = np.sqrt(obstacle.squared_distance(states[:, :2]))
        clearance = np.minimum(clearance, distance - obstacle.radius)
    return float(clearance[0]) if single else clearance


def wheel_velocities(geometry, v, omega):
    """
    Convert body velocities to wheel velocities.

    v_r = (v - omega L / 2) / R and v_l = (v + omega L / 2) / R; ``geometry.swap``
    exchanges the two for the usual differential-drive sign convention.
    """
    half_turn = omega * geometry.base / 2.0
    right = (v - half_turn) / geometry.radius
    left = (v + half_turn) / geometry.radius
    if geometry.swap:
        right, left = left, right
    return right, left


def discounted_cost(task, states, inputs):
    """Sum of gamma^t * l(x_t, u_t) over a recorded trajectory, with its truncation bound."""
    states, _ = as_batch(states, task.state_dim, 'state')
    inputs, _ = as_batch(inputs, task.input_dim, 'input')
    if states.shape[0] == 0 or states.shape[0] != inputs.shape[0]:
        raise ContractViolationError(
            'trajectory must be a nonempty sequence of (state, input) pairs',
            details={'states': states.shape[0], 'inputs': inputs.shape[0]}
        )
    costs = task.stage_cost(states, inputs)
    weights = task.discount ** np.arange(costs.shape[0])
    steps = costs.shape[0]
    tail = task.discount ** steps * task.stage_cost_bound() / (1.0 - task.discount)
    return DiscountedCost(
        value=float(np.dot(weights, costs)),
        undiscounted=float(np.sum(costs)),
        tail_bound=float(tail),
        steps=steps,
    )


def substep_plant(task, substeps):
    """Plant that holds the input over ``substeps`` equal Euler sub-steps; returns (next state, sub-step path)."""
    substeps = max(int(substeps), 1)
    fine = task.dynamics.with_time_step(task.time_step / substeps)

    def plant(x, u):
        state = np.asarray(x, dtype=float)[None, :]
        action = np.asarray(u, dtype=float)[None, :]
        path = []
        for _ in range(substeps):
            state = fine(state, action)
            path.append(state[0])
        return path[-1], np.array(path)

    return plant
