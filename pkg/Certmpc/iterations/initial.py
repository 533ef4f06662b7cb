"""
Initial dataset for the first certificate.

The benchmark's initial trajectory is an open-loop maneuver that cruises
towards the obstacle, swings around it through a left/right/left turn
sequence and cruises on to the goal. The turn sequence is symmetric, so the
lateral offset and the heading return to zero exactly (up to rounding).
States shifted backwards along their heading are added as auxiliary samples
so the first certified region also covers the area behind the trajectory.
"""
import logging
import math

import numpy as np

from Certmpc.certificates.datasets import AUXILIARY, Trajectory, TrajectoryDataset
from Certmpc.dynamics.tasks import in_unsafe, obstacle_clearance
from Certmpc.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def turn_sequence(speed, turn_rate, turn_steps, straight_steps):
    """Inputs of the left, straight, right, straight, left swing."""
    left = np.tile([speed, turn_rate], (turn_steps, 1))
    straight = np.tile([speed, 0.0], (straight_steps, 1))
    right = np.tile([speed, -turn_rate], (2 * turn_steps, 1))
    return np.vstack([left, straight, right, straight, left])


def cruise(distance, speed, time_step):
    """Whole steps at ``speed`` plus one shorter step covering ``distance`` exactly."""
    if distance <= 0:
        return np.empty((0, 2))
    whole = int(math.floor(distance / (speed * time_step)))
    remainder = distance - whole * speed * time_step
    inputs = [[speed, 0.0]] * whole
    if remainder > 1e-12:
        inputs.append([remainder / time_step, 0.0])
    return np.array(inputs, dtype=float)


def roll(task, state, inputs):
    states = [np.asarray(state, dtype=float)]
    for u in inputs:
        states.append(task.dynamics(states[-1][None, :], u[None, :])[0])
    return np.array(states)


def skirting_maneuver(task, speed=1.0, turn_rate=1.0, turn_steps=8, straight_steps=14, cruise_speed=2.0):
    """
    States and inputs of the hand-designed initial trajectory.

    Start and goal must share the lateral coordinate and have zero heading;
    the swing is centred on the first obstacle.
    """
    start, goal = task.start, task.goal
    if abs(start[1] - goal[1]) > 1e-12 or abs(start[2]) > 1e-12 or abs(goal[2]) > 1e-12:
        raise ConfigurationError(errors=['initial_trajectory: start and goal must lie on a common '
                                         'horizontal line with zero heading; provide a trajectory file.'])
    if not np.all(task.input_lower <= [cruise_speed, -turn_rate]) or \
            not np.all(task.input_upper >= [cruise_speed, turn_rate]):
        raise ConfigurationError(errors=['initial_trajectory: maneuver inputs leave the input box.'])

    swing = turn_sequence(speed, turn_rate, turn_steps, straight_steps)
    extent = roll(task, np.array([0.0, 0.0, 0.0]), swing)[-1, 0]
    center = task.obstacles[0].center[0] if task.obstacles else 0.5 * (start[0] + goal[0])

    before = cruise(center - 0.5 * extent - start[0], cruise_speed, task.time_step)
    head = roll(task, start, np.vstack([before, swing]))
    after = cruise(goal[0] - head[-1, 0], cruise_speed, task.time_step)
    inputs = np.vstack([before, swing, after])
    states = roll(task, start, inputs)

    if np.any(in_unsafe(task, states)):
        raise ConfigurationError(errors=['initial_trajectory: designed maneuver enters the unsafe set.'])
    error = float(np.linalg.norm(states[-1] - goal))
    if error > task.goal_tolerance:
        raise ConfigurationError(errors=[f'initial_trajectory: maneuver ends {error:.3g} away from the goal.'])
    logger.info('Initial maneuver: %d steps, clearance %.3f m, goal error %.2e',
                len(inputs), float(np.min(obstacle_clearance(task, states))), error)
    return states, inputs


def behind_states(task, states, offsets):
    """States moved backwards along their own heading by each offset; unsafe ones are dropped."""
    shifted = []
    for offset in offsets:
        moved = states.copy()
        moved[:, 0] -= offset * np.cos(states[:, 2])
        moved[:, 1] -= offset * np.sin(states[:, 2])
        shifted.append(moved[~in_unsafe(task, moved)])
    return np.concatenate(shifted) if shifted else np.empty((0, task.state_dim))


def initial_dataset(task, offsets=(0.5, 1.0), path=None):
    """
    Initial dataset: the trajectory read from ``path`` (JSON Lines) or the
    designed maneuver, plus the auxiliary samples behind it.
    """
    if path is not None:
        loaded = TrajectoryDataset.read_jsonl(path)
        executed = loaded.executed()
        if not executed:
            raise ConfigurationError(errors=[f'initial_trajectory: {path} holds no executed trajectory.'])
        trajectory = Trajectory.from_run(task, 0, executed[0].states, executed[0].inputs, method='initial')
    else:
        states, inputs = skirting_maneuver(task)
        trajectory = Trajectory.from_run(task, 0, states, inputs, method='initial')

    data = TrajectoryDataset((trajectory,))
    extra = behind_states(task, trajectory.states, offsets)
    if len(extra) >= 2:
        data = data.updated(Trajectory.from_run(task, 0, extra, np.zeros((len(extra) - 1, task.input_dim)),
                                                kind=AUXILIARY, method='initial'))
    data.validate(task, dynamics_tol=None if path is not None else 1e-6)
    return data
