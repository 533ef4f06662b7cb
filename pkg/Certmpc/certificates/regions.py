"""
Safe and unsafe training samples derived from trajectory data.

Safe samples lie inside the alpha shape of the dataset's (z, y) projections
and outside every obstacle. Unsafe samples come from the obstacle discs and
from the part of the domain outside the alpha shape.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from Certmpc.dynamics.tasks import in_unsafe
from Certmpc.exceptions import EmptyRegionError
from .alpha_shape import build_alpha_shape, select_alpha

logger = logging.getLogger(__name__)

SAFE_SOURCES = ('alpha_shape', 'dataset')
MAX_SAMPLING_ROUNDS = 50


@dataclass(frozen=True, eq=False)
class SampleRegions:
    safe: np.ndarray
    unsafe: np.ndarray
    alpha: float
    shape: object

    @property
    def counts(self):
        return len(self.safe), len(self.unsafe)

    def label(self, task, states):
        """True where a state belongs to the safe region."""
        states = np.atleast_2d(states)
        return self.shape.contains(states[:, :2]) & ~in_unsafe(task, states)

    def augmented(self, safe_extra=None, unsafe_extra=None):
        safe = self.safe if safe_extra is None or not len(safe_extra) else np.vstack([self.safe, safe_extra])
        unsafe = self.unsafe if unsafe_extra is None or not len(unsafe_extra) else np.vstack([self.unsafe, unsafe_extra])
        return SampleRegions(safe, unsafe, self.alpha, self.shape)


def inflate_points(xy, offset):
    """Add an eight-direction stencil of radius ``offset`` around every point."""
    if offset <= 0:
        return xy
    angles = np.arange(8) * (math.pi / 4)
    stencil = offset * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return np.vstack([xy, (xy[:, None, :] + stencil[None, :, :]).reshape(-1, 2)])


def sample_headings(task, dataset_states, xy, rng, jitter):
    """Heading of the nearest dataset state plus uniform jitter, clipped to the domain."""
    tree = cKDTree(dataset_states[:, :2])
    _, nearest = tree.query(xy)
    theta = dataset_states[nearest, 2] + rng.uniform(-jitter, jitter, size=len(xy))
    return np.clip(theta, task.domain_lower[2], task.domain_upper[2])


def uniform_domain(task, rng, count):
    return rng.uniform(task.domain_lower, task.domain_upper, size=(count, task.state_dim))


def sample_obstacles(task, rng, count):
    """Uniform samples inside the obstacle discs, spread evenly across obstacles."""
    if not task.obstacles or count <= 0:
        return np.empty((0, task.state_dim))
    chosen = rng.integers(len(task.obstacles), size=count)
    centers = np.array([obstacle.center for obstacle in task.obstacles], dtype=float)[chosen]
    radii = np.array([obstacle.radius for obstacle in task.obstacles])[chosen]
    r = radii * np.sqrt(rng.random(count))
    phi = rng.uniform(0.0, 2 * math.pi, size=count)
    theta = rng.uniform(task.domain_lower[2], task.domain_upper[2], size=count)
    return np.stack([centers[:, 0] + r * np.cos(phi), centers[:, 1] + r * np.sin(phi), theta], axis=1)


def sample_exterior(task, shape, rng, count):
    """Rejection samples from the domain outside the alpha shape."""
    found, total = [], 0
    for _ in range(MAX_SAMPLING_ROUNDS):
        if total >= count:
            break
        candidates = uniform_domain(task, rng, max(4 * (count - total), 64))
        outside = candidates[~shape.contains(candidates[:, :2])]
        found.append(outside)
        total += len(outside)
    if not found:
        return np.empty((0, task.state_dim))
    return np.concatenate(found)[:count]


def sample_safe(task, shape, dataset_states, rng, count, jitter):
    found, total = [], 0
    for _ in range(MAX_SAMPLING_ROUNDS):
        if total >= count:
            break
        xy = shape.sample(rng, 2 * (count - total))
        if not len(xy):
            break
        states = np.column_stack([xy, sample_headings(task, dataset_states, xy, rng, jitter)])
        accepted = states[~in_unsafe(task, states)]
        found.append(accepted)
        total += len(accepted)
    if not found:
        return np.empty((0, task.state_dim))
    return np.concatenate(found)[:count]


def construct_regions(data, task, alpha=None, counts=(2000, 2000), rng=None, inflate=0.25,
                      theta_jitter=0.2, safe_source='alpha_shape'):
    """
    Build safe/unsafe sample sets from a trajectory dataset.

    ``alpha=None`` picks the smallest connected, covering alpha for the
    (inflated) projections.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    states = data.states(state_dim=task.state_dim)
    if not len(states):
        raise EmptyRegionError('dataset is empty; cannot build sampling regions')
    n_safe, n_unsafe = counts

    xy = inflate_points(states[:, :2], inflate)
    if alpha is None:
        alpha = select_alpha(xy)
        logger.info('Selected alpha %.4f for %d dataset states', alpha, len(states))
    shape = build_alpha_shape(xy, alpha)
    if shape.is_empty:
        raise EmptyRegionError(f'alpha shape with alpha={alpha:.4g} has no triangles; increase alpha',
                               details={'alpha': alpha})

    if safe_source == 'dataset':
        safe = states[~in_unsafe(task, states)]
    else:
        safe = sample_safe(task, shape, states, rng, n_safe, theta_jitter)
    if not len(safe):
        raise EmptyRegionError(f'alpha shape with alpha={alpha:.4g} holds no safe state; increase alpha',
                               details={'alpha': alpha})
    if len(safe) < n_safe and safe_source != 'dataset':
        logger.warning('Only %d of %d safe samples found inside the alpha shape', len(safe), n_safe)

    inside_count = n_unsafe // 2 if task.obstacles else 0
    unsafe = np.vstack([
        sample_obstacles(task, rng, inside_count),
        sample_exterior(task, shape, rng, n_unsafe - inside_count),
    ])
    logger.info('Built regions: %d safe, %d unsafe samples (alpha %.4f, area %.3f)',
                len(safe), len(unsafe), alpha, shape.area)
    return SampleRegions(safe, unsafe, float(alpha), shape)
