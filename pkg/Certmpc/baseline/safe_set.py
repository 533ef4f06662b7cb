"""
Sampled safe set of the baseline LMPC.

Every state of every executed trajectory is stored with its discounted
cost-to-go and the recorded input that moved it on. The final state of a
trajectory is stored with a zero input, which keeps the car at rest, so the
successor of every stored state is stored as well.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from Certmpc.exceptions import ContractViolationError

logger = logging.getLogger(__name__)

STATE_DECIMALS = 12


def trajectory_points(trajectory, input_dim):
    """(cost-to-go, state, successor input, successor state) for every state of a trajectory."""
    count = len(trajectory.states)
    for t, state in enumerate(trajectory.states):
        if t + 1 < count:
            yield float(trajectory.cost_to_go[t]), state, trajectory.inputs[t], trajectory.states[t + 1]
        else:
            yield float(trajectory.cost_to_go[t]), state, np.zeros(input_dim), state


def merge_points(points):
    """Keep one point per state, the one with the smallest cost-to-go; first-seen order."""
    best = {}
    for point in points:
        key = tuple(np.round(point[1], STATE_DECIMALS))
        if key not in best or point[0] < best[key][0]:
            best[key] = point
    return list(best.values())


@dataclass(frozen=True, eq=False)
class SampledSafeSet:
    states: np.ndarray
    cost_to_go: np.ndarray
    successor_inputs: np.ndarray
    successors: np.ndarray
    iteration: int

    def __post_init__(self):
        if not len(self.states):
            raise ContractViolationError('sampled safe set is empty')
        object.__setattr__(self, 'tree', cKDTree(self.states))

    def __len__(self):
        return len(self.states)

    @classmethod
    def from_points(cls, points, iteration):
        points = merge_points(points)
        if not points:
            raise ContractViolationError('sampled safe set needs at least one executed trajectory')
        return cls(
            states=np.array([point[1] for point in points], dtype=float),
            cost_to_go=np.array([point[0] for point in points]),
            successor_inputs=np.array([point[2] for point in points], dtype=float),
            successors=np.array([point[3] for point in points], dtype=float),
            iteration=iteration,
        )

    @classmethod
    def from_dataset(cls, data, input_dim=2):
        """Safe set of every executed trajectory in ``data``; auxiliary samples are not reachable states."""
        executed = data.executed()
        points = [point for trajectory in executed for point in trajectory_points(trajectory, input_dim)]
        return cls.from_points(points, max((trajectory.iteration for trajectory in executed), default=0))

    def points(self):
        return zip(self.cost_to_go, self.states, self.successor_inputs, self.successors)

    def updated(self, trajectory):
        """Safe set grown by one executed trajectory."""
        added = trajectory_points(trajectory, self.successor_inputs.shape[1])
        grown = SampledSafeSet.from_points(list(self.points()) + list(added),
                                           max(self.iteration, trajectory.iteration))
        logger.info('Sampled safe set: %d -> %d states', len(self), len(grown))
        return grown

    def nearest(self, point, count):
        """Indices of the ``count`` stored states closest to ``point``; 0 means all of them."""
        count = len(self) if count <= 0 else min(count, len(self))
        _, indices = self.tree.query(np.asarray(point, dtype=float), k=count)
        return np.atleast_1d(indices)
