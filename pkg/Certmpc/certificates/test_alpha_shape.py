import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.spatial import ConvexHull

from Certmpc.exceptions import DegenerateRegionError
from .alpha_shape import build_alpha_shape, circumradii, select_alpha, write_polygon_csv


def c_shape_points():
    """Points on a thick C opening to the right, cavity around (0.5, 0.5)"""
    points = []
    for x in np.linspace(0, 1, 8):
        points.append((x, 0.0))
        points.append((x, 0.2))
        points.append((x, 0.8))
        points.append((x, 1.0))
    for y in np.linspace(0.2, 0.8, 5):
        points.append((0.0, y))
        points.append((0.2, y))
    return np.array(points)


class AlphaShapeTestCase(SimpleTestCase):
    """Test cases for alpha shape construction and membership"""

    def setUp(self):
        self.square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

    def test_square_hull_contains_center(self):
        shape = build_alpha_shape(self.square, math.inf)
        self.assertTrue(shape.contains([0.5, 0.5]))
        self.assertAlmostEqual(shape.area, 1.0)

    def test_square_excludes_far_point(self):
        shape = build_alpha_shape(self.square, math.inf)
        self.assertFalse(shape.contains([2.0, 2.0]))

    def test_c_shape_excludes_cavity(self):
        """Test a small alpha leaves the cavity outside"""
        shape = build_alpha_shape(c_shape_points(), 0.2)
        self.assertFalse(shape.contains([0.6, 0.5]))
        self.assertTrue(shape.contains([0.1, 0.5]))
        self.assertTrue(build_alpha_shape(c_shape_points(), math.inf).contains([0.6, 0.5]))

    def test_c_shape_matches_brute_force(self):
        """Test membership against a direct circumradius check of every triangle"""
        points = c_shape_points()
        shape = build_alpha_shape(points, 0.2)
        grid = np.stack(np.meshgrid(np.linspace(0, 1, 41), np.linspace(0, 1, 41)), axis=-1).reshape(-1, 2)
        inside = shape.contains(grid)
        tri = shape.triangulation
        for point, flag in zip(grid, inside):
            simplex = tri.find_simplex(point)
            if simplex < 0:
                self.assertFalse(flag)
                continue
            corners = tri.points[tri.simplices[simplex]]
            a = np.linalg.norm(corners[0] - corners[1])
            b = np.linalg.norm(corners[1] - corners[2])
            c = np.linalg.norm(corners[2] - corners[0])
            s = (a + b + c) / 2.0
            area = math.sqrt(max(s * (s - a) * (s - b) * (s - c), 0.0))
            expected = area > 0 and a * b * c / (4.0 * area) <= 0.2 + 1e-12
            self.assertEqual(bool(flag), expected)

    def test_too_few_points(self):
        with self.assertRaises(DegenerateRegionError):
            build_alpha_shape([[0, 0], [1, 1]], 1.0)

    def test_duplicates_collapse(self):
        with self.assertRaises(DegenerateRegionError):
            build_alpha_shape([[0, 0], [0, 0], [1, 1], [1, 1]], 1.0)

    def test_collinear_points(self):
        with self.assertRaises(DegenerateRegionError):
            build_alpha_shape([[0, 0], [1, 1], [2, 2], [3, 3]], 1.0)

    def test_infinite_alpha_equals_convex_hull(self):
        """Test grid membership agrees with the convex hull on random sets"""
        rng = np.random.default_rng(0)
        axis = np.linspace(-0.05, 1.05, 100)
        grid = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
        for _ in range(50):
            points = rng.random((30, 2))
            shape = build_alpha_shape(points, math.inf)
            hull = ConvexHull(points)
            in_hull = np.all(grid @ hull.equations[:, :2].T + hull.equations[:, 2] <= 1e-12, axis=1)
            np.testing.assert_array_equal(shape.contains(grid), in_hull)

    def test_monotone_in_alpha(self):
        """Test the region only grows with alpha"""
        rng = np.random.default_rng(1)
        axis = np.linspace(0, 1, 60)
        grid = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
        for _ in range(10):
            points = rng.random((40, 2))
            previous = None
            for alpha in (0.05, 0.1, 0.2, 0.5, math.inf):
                inside = build_alpha_shape(points, alpha).contains(grid)
                if previous is not None:
                    self.assertTrue(np.all(inside[previous]))
                previous = inside

    def test_circumradius_of_right_triangle(self):
        points = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
        self.assertAlmostEqual(circumradii(points, np.array([[0, 1, 2]]))[0], math.sqrt(2))


class AlphaSelectionTestCase(SimpleTestCase):
    """Test cases for automatic alpha selection"""

    def test_selected_shape_is_connected_and_covering(self):
        points = c_shape_points()
        alpha = select_alpha(points)
        shape = build_alpha_shape(points, alpha)
        self.assertTrue(shape.is_connected())
        self.assertTrue(shape.covers_points())
        self.assertFalse(shape.contains([0.6, 0.5]))

    def test_selected_alpha_is_minimal(self):
        points = c_shape_points()
        alpha = select_alpha(points)
        smaller = build_alpha_shape(points, alpha * (1 - 1e-9))
        self.assertFalse(smaller.covers_points() and smaller.is_connected())


class PolygonExportTestCase(SimpleTestCase):
    """Test cases for polygon export"""

    def test_square_polygon_rows(self):
        shape = build_alpha_shape(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), math.inf)
        rows = shape.boundary_rows()
        self.assertEqual(len(rows), 5)
        self.assertEqual(rows[0][3:], rows[-1][3:])

    def test_csv_header(self):
        shape = build_alpha_shape(c_shape_points(), 0.2)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_polygon_csv(Path(tmp) / 'alpha.csv', shape)
            lines = Path(path).read_text().splitlines()
        self.assertEqual(lines[0], 'polygon,ring,vertex,z,y')
        self.assertGreater(len(lines), 4)
