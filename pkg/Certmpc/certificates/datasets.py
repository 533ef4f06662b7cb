"""
Trajectory datasets collected across learning iterations.

Stored on disk as JSON Lines, one record per time step:
``{"iteration", "trajectory", "kind", "method", "t", "x", "u", "cost_to_go"}``.
The final state of a trajectory has ``"u": null``.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from Certmpc.dynamics.tasks import in_unsafe, stage_cost, step
from Certmpc.exceptions import ContractViolationError

logger = logging.getLogger(__name__)

TRAJECTORY = 'trajectory'
AUXILIARY = 'auxiliary'


def cost_to_go_tails(task, states, inputs):
    """
    Discounted cost-to-go of every state along a recorded trajectory.

    The final state is treated as held at rest, so its tail is
    l(x_T, 0) / (1 - gamma); it vanishes at the goal.
    """
    gamma = task.discount
    final = stage_cost(task, states[-1], np.zeros(task.input_dim)) / (1.0 - gamma)
    tails = np.empty(len(states))
    tails[-1] = final
    if len(inputs):
        costs = stage_cost(task, states[:-1], inputs)
        for t in range(len(inputs) - 1, -1, -1):
            tails[t] = costs[t] + gamma * tails[t + 1]
    return tails


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States x_0..x_T, inputs u_0..u_{T-1} and their cost-to-go tails."""
    iteration: int
    states: np.ndarray
    inputs: np.ndarray
    cost_to_go: np.ndarray
    kind: str = TRAJECTORY
    method: str = 'proposed'

    @classmethod
    def from_run(cls, task, iteration, states, inputs, kind=TRAJECTORY, method='proposed'):
        states = np.asarray(states, dtype=float).reshape(-1, task.state_dim)
        inputs = np.asarray(inputs, dtype=float).reshape(-1, task.input_dim)
        if len(states) != len(inputs) + 1:
            raise ContractViolationError(
                'trajectory needs exactly one more state than inputs',
                details={'states': len(states), 'inputs': len(inputs)}
            )
        return cls(iteration, states, inputs, cost_to_go_tails(task, states, inputs), kind, method)

    def __len__(self):
        return len(self.states)

    def records(self, index):
        for t, state in enumerate(self.states):
            yield {
                'iteration': self.iteration,
                'trajectory': index,
                'kind': self.kind,
                'method': self.method,
                't': t,
                'x': state.tolist(),
                'u': self.inputs[t].tolist() if t < len(self.inputs) else None,
                'cost_to_go': float(self.cost_to_go[t]),
            }


@dataclass(frozen=True)
class TrajectoryDataset:
    """Immutable collection of trajectories; ``updated`` returns a grown copy."""
    trajectories: tuple = field(default_factory=tuple)

    def __len__(self):
        return sum(len(trajectory) for trajectory in self.trajectories)

    @property
    def is_empty(self):
        return len(self) == 0

    @property
    def latest_iteration(self):
        return max((trajectory.iteration for trajectory in self.trajectories), default=-1)

    def updated(self, *trajectories):
        return TrajectoryDataset(self.trajectories + tuple(trajectories))

    def executed(self):
        """Trajectories that were actually driven (excludes auxiliary samples)."""
        return [trajectory for trajectory in self.trajectories if trajectory.kind == TRAJECTORY]

    def states(self, include_auxiliary=True, state_dim=3):
        chosen = self.trajectories if include_auxiliary else self.executed()
        if not chosen:
            return np.empty((0, state_dim))
        return np.concatenate([trajectory.states for trajectory in chosen])

    def transitions(self, state_dim=3, input_dim=2):
        """(x_k, u_k, x_{k+1}) arrays over all executed trajectories."""
        executed = [trajectory for trajectory in self.executed() if len(trajectory.inputs)]
        if not executed:
            return np.empty((0, state_dim)), np.empty((0, input_dim)), np.empty((0, state_dim))
        return (
            np.concatenate([trajectory.states[:-1] for trajectory in executed]),
            np.concatenate([trajectory.inputs for trajectory in executed]),
            np.concatenate([trajectory.states[1:] for trajectory in executed]),
        )

    def validate(self, task, dynamics_tol=1e-6):
        """
        Check that no stored state is unsafe and, when ``dynamics_tol`` is
        given, that executed trajectories follow the task dynamics.
        """
        for index, trajectory in enumerate(self.trajectories):
            unsafe = in_unsafe(task, trajectory.states)
            if np.any(unsafe):
                t = int(np.flatnonzero(unsafe)[0])
                raise ContractViolationError(
                    'dataset contains an unsafe state',
                    details={'trajectory': index, 't': t, 'x': trajectory.states[t].tolist()}
                )
            if dynamics_tol is None or trajectory.kind != TRAJECTORY or not len(trajectory.inputs):
                continue
            predicted = step(task, trajectory.states[:-1], trajectory.inputs)
            error = np.linalg.norm(predicted - trajectory.states[1:], axis=1)
            if np.max(error) > dynamics_tol:
                t = int(np.argmax(error))
                raise ContractViolationError(
                    'dataset transition does not follow the dynamics',
                    details={'trajectory': index, 't': t, 'error': float(error[t])}
                )
        return True

    def write_jsonl(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as handle:
            for index, trajectory in enumerate(self.trajectories):
                for record in trajectory.records(index):
                    handle.write(json.dumps(record) + '\n')
        return path

    @classmethod
    def read_jsonl(cls, path):
        grouped = {}
        with open(path) as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    key = record['trajectory']
                    grouped.setdefault(key, []).append(record)
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ContractViolationError(
                        f'malformed dataset record on line {line_number}',
                        details={'path': str(path), 'reason': str(exc)}
                    )

        trajectories = []
        for key in sorted(grouped):
            records = sorted(grouped[key], key=lambda record: record['t'])
            first = records[0]
            input_dim = len(records[0]['u']) if len(records) > 1 else 2
            trajectories.append(Trajectory(
                iteration=int(first['iteration']),
                states=np.array([record['x'] for record in records], dtype=float),
                inputs=np.array([record['u'] for record in records[:-1]], dtype=float).reshape(len(records) - 1, input_dim),
                cost_to_go=np.array([record['cost_to_go'] for record in records], dtype=float),
                kind=first.get('kind', TRAJECTORY),
                method=first.get('method', 'proposed'),
            ))
        logger.debug('Read %d trajectories from %s', len(trajectories), path)
        return cls(tuple(trajectories))
