"""
Alpha shapes of planar point sets.

A Delaunay triangle belongs to the shape when its circumradius is at most
``alpha``; with ``alpha = inf`` the shape is the convex hull.
"""
import csv
import logging
import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, QhullError
from shapely.geometry import MultiPolygon, Polygon
from shapely.ops import unary_union

from Certmpc.exceptions import DegenerateRegionError

logger = logging.getLogger(__name__)

POINT_DECIMALS = 9


def circumradii(points, simplices):
    """Circumradius of every triangle; zero-area triangles get +inf."""
    a = points[simplices[:, 0]]
    b = points[simplices[:, 1]]
    c = points[simplices[:, 2]]
    ab = np.linalg.norm(a - b, axis=1)
    bc = np.linalg.norm(b - c, axis=1)
    ca = np.linalg.norm(c - a, axis=1)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    area = 0.5 * np.abs(cross)
    with np.errstate(divide='ignore', invalid='ignore'):
        radii = ab * bc * ca / (4.0 * area)
    radii[~np.isfinite(radii)] = np.inf
    return radii


class AlphaShape:
    """Union of the Delaunay triangles with circumradius <= alpha."""

    def __init__(self, points, alpha, triangulation, radii):
        self.points = points
        self.alpha = float(alpha)
        self.triangulation = triangulation
        self.radii = radii
        self.kept = radii <= self.alpha

    @property
    def triangles(self):
        return self.triangulation.simplices[self.kept]

    @property
    def is_empty(self):
        return not np.any(self.kept)

    def triangle_areas(self):
        tri = self.points[self.triangles]
        cross = ((tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1])
                 - (tri[:, 1, 1] - tri[:, 0, 1]) * (tri[:, 2, 0] - tri[:, 0, 0]))
        return 0.5 * np.abs(cross)

    @property
    def area(self):
        return float(np.sum(self.triangle_areas()))

    def contains(self, xy):
        """Membership of query points of shape (B, 2) or (2,)."""
        query = np.atleast_2d(np.asarray(xy, dtype=float))
        simplex = self.triangulation.find_simplex(query)
        inside = simplex >= 0
        inside[inside] = self.kept[simplex[inside]]
        return inside if np.ndim(xy) > 1 else bool(inside[0])

    def covers_points(self):
        """True when every input point is a vertex of a kept triangle."""
        covered = np.zeros(len(self.points), dtype=bool)
        covered[np.unique(self.triangles)] = True
        coplanar = self.triangulation.coplanar
        if len(coplanar):
            covered[coplanar[:, 0]] = self.kept[coplanar[:, 1]]
        return bool(np.all(covered))

    def component_count(self):
        """Number of edge-connected components among kept triangles."""
        kept_index = np.flatnonzero(self.kept)
        if kept_index.size == 0:
            return 0
        position = np.full(len(self.kept), -1)
        position[kept_index] = np.arange(kept_index.size)
        neighbors = self.triangulation.neighbors[kept_index]
        rows = np.repeat(np.arange(kept_index.size), 3)
        cols = neighbors.ravel()
        valid = cols >= 0
        rows, cols = rows[valid], position[cols[valid]]
        linked = cols >= 0
        graph = coo_matrix(
            (np.ones(int(linked.sum())), (rows[linked], cols[linked])),
            shape=(kept_index.size, kept_index.size)
        )
        count, _ = connected_components(graph, directed=False)
        return int(count)

    def is_connected(self):
        return self.component_count() == 1

    def sample(self, rng, count):
        """Uniform samples from the shape's interior, shape (count, 2)."""
        if self.is_empty or count <= 0:
            return np.empty((0, 2))
        areas = self.triangle_areas()
        chosen = rng.choice(len(areas), size=count, p=areas / areas.sum())
        corners = self.points[self.triangles[chosen]]
        r1 = np.sqrt(rng.random(count))
        r2 = rng.random(count)
        return ((1.0 - r1)[:, None] * corners[:, 0]
                + (r1 * (1.0 - r2))[:, None] * corners[:, 1]
                + (r1 * r2)[:, None] * corners[:, 2])

    def polygons(self):
        """Kept triangles merged into a shapely (Multi)Polygon."""
        pieces = [Polygon(self.points[simplex]) for simplex in self.triangles]
        if not pieces:
            return MultiPolygon()
        return unary_union(pieces)

    def boundary_rows(self):
        """(polygon, ring, vertex, z, y) rows; ring 0 is the exterior, then holes."""
        geometry = self.polygons()
        parts = list(geometry.geoms) if hasattr(geometry, 'geoms') else [geometry]
        rows = []
        for polygon_index, polygon in enumerate(parts):
            rings = [polygon.exterior, *polygon.interiors]
            for ring_index, ring in enumerate(rings):
                for vertex_index, (z, y) in enumerate(ring.coords):
                    rows.append((polygon_index, ring_index, vertex_index, z, y))
        return rows


def unique_points(points):
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise DegenerateRegionError('alpha shape needs planar points', details={'shape': list(points.shape)})
    # Stencil points from neighbouring samples can coincide up to rounding.
    return np.unique(np.round(points, POINT_DECIMALS), axis=0)


def triangulate(points):
    """Delaunay triangulation of unique planar points, with degeneracy checks."""
    points = unique_points(points)
    if len(points) < 3:
        raise DegenerateRegionError(
            'alpha shape needs at least three distinct points',
            details={'points': len(points)}
        )
    if np.linalg.matrix_rank(points - points.mean(axis=0)) < 2:
        raise DegenerateRegionError('alpha shape points are collinear', details={'points': len(points)})
    try:
        triangulation = Delaunay(points)
    except QhullError as exc:
        raise DegenerateRegionError('triangulation failed', details={'reason': str(exc)})
    return points, triangulation, circumradii(points, triangulation.simplices)


def build_alpha_shape(points, alpha):
    """Alpha shape of a planar point set; ``alpha = math.inf`` gives the convex hull."""
    if not alpha > 0:
        raise DegenerateRegionError('alpha must be positive', details={'alpha': alpha})
    points, triangulation, radii = triangulate(points)
    return AlphaShape(triangulation.points, alpha, triangulation, radii)


def select_alpha(points):
    """
    Smallest alpha whose shape is connected and covers every point.

    Binary search over the sorted triangle circumradii, followed by an upward
    scan in case connectivity is not monotone around the found value.
    """
    points, triangulation, radii = triangulate(points)
    candidates = np.unique(radii[np.isfinite(radii)])
    if candidates.size == 0:
        return math.inf

    def acceptable(alpha):
        shape = AlphaShape(triangulation.points, alpha, triangulation, radii)
        return shape.covers_points() and shape.is_connected()

    low, high = 0, candidates.size - 1
    if not acceptable(candidates[high]):
        return math.inf
    while low < high:
        middle = (low + high) // 2
        if acceptable(candidates[middle]):
            high = middle
        else:
            low = middle + 1
    for index in range(low, candidates.size):
        if acceptable(candidates[index]):
            logger.debug('Selected alpha %.4f from %d candidates', candidates[index], candidates.size)
            return float(candidates[index])
    return math.inf


def write_polygon_csv(path, shape):
    """Export the shape boundary as a polygon vertex list"""
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(['polygon', 'ring', 'vertex', 'z', 'y'])
        for row in shape.boundary_rows():
            writer.writerow([row[0], row[1], row[2], f'{row[3]:.12g}', f'{row[4]:.12g}'])
    return path
