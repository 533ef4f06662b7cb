import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from Certmpc.dynamics.tasks import benchmark_task
from Certmpc.iterations.initial import initial_dataset
from Certmpc.neural.networks import Certificate, Mlp, Policy
from .exporters import (
    HEATMAP_HEADER, certified_fraction, format_value, heatmap_name, heatmap_rows, parse_value, read_csv,
    verify_certificate, write_csv, write_heatmap,
)


def quadratic_certificate(task, scale=0.1, level=1e6):
    weights = scale * np.eye(3)
    return Certificate(Mlp([3, 3], [weights], [-weights @ task.goal]), level)


class HeatmapTestCase(SimpleTestCase):
    """Test cases for the certificate heatmap export"""

    def setUp(self):
        self.task = benchmark_task()

    def test_grid_size(self):
        rows = heatmap_rows(quadratic_certificate(self.task), self.task, -np.pi / 4, 3)
        self.assertEqual(len(rows), 9)
        self.assertEqual({row[0] for row in rows}, {-8.0, 0.0, 8.0})

    def test_zero_certificate_all_below(self):
        cert = Certificate(Mlp.zeros([3, 4, 1]), 7.0)
        rows = heatmap_rows(cert, self.task, 0.0, 5)
        self.assertTrue(all(row[3] for row in rows))
        self.assertEqual(certified_fraction(rows), 1.0)

    def test_level_flag(self):
        """Test the flag marks exactly the grid points with V <= c"""
        cert = quadratic_certificate(self.task, level=1.0)
        for z, y, value, below in heatmap_rows(cert, self.task, 0.3, 9):
            expected = 0.01 * ((z - 6.0) ** 2 + y ** 2 + 0.09)
            self.assertAlmostEqual(value, expected)
            self.assertEqual(below, expected <= 1.0)

    def test_write_with_script(self):
        cert = quadratic_certificate(self.task, level=1.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / heatmap_name(2, -np.pi / 4)
            fraction = write_heatmap(path, cert, self.task, -np.pi / 4, 4)
            rows = read_csv(path)
            script = path.with_suffix('.gp').read_text()
        self.assertEqual(path.name, 'heatmap_2_theta-0.7854.csv')
        self.assertEqual(list(rows[0]), HEATMAP_HEADER)
        self.assertEqual(len(rows), 16)
        self.assertEqual(fraction, sum(row['below_level'] == 'True' for row in rows) / 16)
        self.assertIn(path.name, script)


class CsvTestCase(SimpleTestCase):
    """Test cases for CSV value formatting"""

    def test_values_read_back_exactly(self):
        values = [0.1, 1e-17, -3.0, 7, True, False, None, 'converged', np.float64(2.0 / 3.0), np.bool_(True)]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(Path(tmp) / 'values.csv', [f'c{index}' for index in range(len(values))], [values])
            row = read_csv(path)[0]
        parsed = [parse_value(row[f'c{index}']) for index in range(len(values))]
        self.assertEqual(parsed, [0.1, 1e-17, -3.0, 7, True, False, None, 'converged', 2.0 / 3.0, True])

    def test_format(self):
        self.assertEqual(format_value(None), '')
        self.assertEqual(format_value(np.float32(0.5)), '0.5')
        self.assertEqual(format_value(3), '3')


class VerifyCertificateTestCase(SimpleTestCase):
    """Test cases for the verification report"""

    def setUp(self):
        self.task = benchmark_task()
        self.data = initial_dataset(self.task)
        self.policy = Policy(Mlp.zeros([3, 4, 2]), self.task.input_lower, self.task.input_upper)

    def test_report_fields(self):
        cert = quadratic_certificate(self.task, level=7.0)
        report = verify_certificate(cert, self.policy, self.task, self.data, 300, seed=4, counts=(100, 100))
        for key in ('rates', 'counts', 'worst', 'overall_rate', 'delta1_max', 'delta2', 'seed'):
            self.assertIn(key, report)
        self.assertGreaterEqual(report['delta1_max'], 0.0)
        self.assertGreaterEqual(report['delta2'], 0.0)

    def test_reproducible(self):
        cert = quadratic_certificate(self.task, level=7.0)
        first = verify_certificate(cert, self.policy, self.task, self.data, 300, seed=4, counts=(100, 100))
        second = verify_certificate(cert, self.policy, self.task, self.data, 300, seed=4, counts=(100, 100))
        self.assertEqual(first, second)
