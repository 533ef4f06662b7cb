import json
import tempfile
from io import StringIO
from pathlib import Path
from types import SimpleNamespace
from unittest import mock

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from Certmpc.dynamics.tasks import DiscountedCost, benchmark_task
from Certmpc.iterations.reports import IterationReport, RunArtifacts
from Certmpc.neural.networks import Certificate, Mlp, Policy
from Certmpc.neural.utils import load_params, save_params


def quadratic_certificate(task, scale=0.1, level=1e6):
    weights = scale * np.eye(3)
    return Certificate(Mlp([3, 3], [weights], [-weights @ task.goal]), level)


def zero_policy(task):
    return Policy(Mlp.zeros([3, 4, 2]), task.input_lower, task.input_upper)


def report(iteration, cost, method='proposed'):
    return IterationReport(iteration=iteration, method=method,
                           cost=DiscountedCost(cost, 2 * cost, 0.0, 10), trajectory=None)


class CommandTestMixin:
    """Runs a management command and returns its parsed JSON payload"""

    def call(self, name, *args):
        stdout, stderr = StringIO(), StringIO()
        call_command(name, *args, stdout=stdout, stderr=stderr)
        return json.loads(stdout.getvalue())

    def call_failing(self, name, *args):
        stdout, stderr = StringIO(), StringIO()
        with self.assertRaises(CommandError) as context:
            call_command(name, *args, stdout=stdout, stderr=stderr)
        return context.exception, json.loads(stderr.getvalue())


class RunCommandTestCase(CommandTestMixin, SimpleTestCase):
    """Test cases for the run command"""

    def test_run_reports_iterations(self):
        result = SimpleNamespace(reports=[report(0, 4.0), report(1, 3.0)])
        with tempfile.TemporaryDirectory() as tmp, \
                mock.patch('Certmpc.runner.management.commands.run.run_all', return_value=result) as run_all:
            payload = self.call('run', '--output-dir', tmp, '--seed', '5')
        config = run_all.call_args.args[0]
        self.assertEqual(config.seed, 5)
        self.assertEqual(str(config.output_dir), tmp)
        self.assertTrue(payload['status'])
        self.assertEqual([entry['cost'] for entry in payload['data']['iterations']], [4.0, 3.0])

    def test_invalid_config_exit_code(self):
        error, payload = self.call_failing('run', '--set', 'task.discount=1.2')
        self.assertEqual(error.returncode, 2)
        self.assertFalse(payload['status'])
        self.assertTrue(any(line.startswith('task.discount:') for line in payload['errors']))

    def test_config_file_is_read(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'config.json'
            path.write_text(json.dumps({'task': {'horizon': 0}}))
            error, payload = self.call_failing('run', str(path))
        self.assertEqual(error.returncode, 2)
        self.assertTrue(any(line.startswith('task.horizon:') for line in payload['errors']))


class TrainCertCommandTestCase(CommandTestMixin, SimpleTestCase):
    """Test cases for the train_cert command"""

    def test_writes_parameter_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            payload = self.call('train_cert', '--output-dir', tmp, '--iteration', '2')
            cert = load_params(Path(tmp) / 'cert_2.params', 'certificate')
            policy = load_params(Path(tmp) / 'policy_2.params', 'policy')
        self.assertEqual(cert.net.sizes[0], 3)
        self.assertEqual(policy.net.sizes[-1], 2)
        self.assertGreaterEqual(payload['data']['delta1_max'], 0.0)
        self.assertIn('report', payload['data'])

    def test_missing_dataset(self):
        error, payload = self.call_failing('train_cert', '--dataset', '/nonexistent/data.jsonl')
        self.assertEqual(error.returncode, 2)
        self.assertTrue(payload['errors'][0].startswith('dataset:'))


class NetworkCommandTestCase(CommandTestMixin, SimpleTestCase):
    """Test cases for commands that read saved networks"""

    def setUp(self):
        self.task = benchmark_task()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.cert = str(save_params(Path(self.tmp.name) / 'cert_0.params', quadratic_certificate(self.task)))
        self.policy = str(save_params(Path(self.tmp.name) / 'policy_0.params', zero_policy(self.task)))

    def test_export_heatmap(self):
        output = Path(self.tmp.name) / 'grid.csv'
        payload = self.call('export_heatmap', '--cert', self.cert, '--theta', '0', '--resolution', '3',
                            '--output', str(output))
        self.assertEqual(payload['data']['rows'], 9)
        self.assertEqual(len(output.read_text().strip().splitlines()), 10)
        self.assertTrue(output.with_suffix('.gp').exists())
        self.assertEqual(payload['data']['certified_fraction'], 1.0)

    def test_export_heatmap_resolution(self):
        error, _ = self.call_failing('export_heatmap', '--cert', self.cert, '--resolution', '1',
                                     '--output', str(Path(self.tmp.name) / 'grid.csv'))
        self.assertEqual(error.returncode, 2)

    def test_verify_cert(self):
        payload = self.call('verify_cert', '--cert', self.cert, '--policy', self.policy, '--n-test', '200')
        data = payload['data']
        self.assertTrue(0.0 <= data['overall_rate'] <= 1.0)
        self.assertGreaterEqual(data['delta2'], 0.0)

    def test_solve_ocp(self):
        payload = self.call('solve_ocp', '--cert', self.cert, '--policy', self.policy,
                            '--set', 'task.horizon=5', '--state', '4.0', '0.0', '0.0')
        data = payload['data']
        self.assertEqual(len(data['inputs']), 5)
        self.assertEqual(len(data['states']), 6)
        self.assertIn(data['status'], ('converged', 'max_iter', 'infeasible_fallback'))
        self.assertIn('delta1_terminal', data)

    def test_missing_certificate(self):
        error, payload = self.call_failing('solve_ocp', '--cert', '/nonexistent/cert.params',
                                           '--policy', self.policy)
        self.assertEqual(error.returncode, 2)
        self.assertTrue(payload['errors'][0].startswith('cert:'))

    def test_wrong_parameter_kind(self):
        error, _ = self.call_failing('verify_cert', '--cert', self.policy, '--policy', self.policy)
        self.assertEqual(error.returncode, 2)

    def test_malformed_dataset(self):
        """Test an unreadable dataset file is reported as an input error"""
        dataset = Path(self.tmp.name) / 'broken.jsonl'
        dataset.write_text('{"iteration": 0, "states": \n')
        error, payload = self.call_failing('verify_cert', '--cert', self.cert, '--policy', self.policy,
                                           '--dataset', str(dataset))
        self.assertEqual(error.returncode, 2)
        self.assertFalse(payload['status'])


class SummaryCommandTestCase(SimpleTestCase):
    """Test cases for the summary command"""

    def test_summary_with_baseline(self):
        with tempfile.TemporaryDirectory() as tmp:
            RunArtifacts(Path(tmp) / 'run').write_summary([report(0, 4.0), report(1, 3.0)])
            RunArtifacts(Path(tmp) / 'baseline').write_summary([report(0, 4.0, 'baseline'),
                                                                report(1, 3.5, 'baseline')])
            stdout = StringIO()
            call_command('summary', str(Path(tmp) / 'run'), '--baseline-dir', str(Path(tmp) / 'baseline'),
                         stdout=stdout, stderr=StringIO())
            written = (Path(tmp) / 'run' / 'comparison.csv').read_text().splitlines()
        self.assertEqual(len(written), 3)
        self.assertTrue(written[0].startswith('iteration,cost'))
        self.assertIn('baseline_cost', stdout.getvalue())
        self.assertIn('3.5', written[2])

    def test_missing_summary(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as context:
                call_command('summary', tmp, stdout=StringIO(), stderr=StringIO())
        self.assertEqual(context.exception.returncode, 2)
