import json
import tempfile
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase

from Certmpc.exceptions import ConfigurationError
from .response_utils import error_response, flatten_errors
from .serializers import apply_overrides, load_run_config, parse_override


def write_config(directory, payload):
    path = Path(directory) / 'config.json'
    path.write_text(json.dumps(payload))
    return path


class RunConfigSerializerTestCase(SimpleTestCase):
    """Test cases for run-config validation"""

    def test_defaults_follow_settings(self):
        config = load_run_config()
        defaults = settings.CERTMPC
        self.assertEqual(config.task.horizon, defaults['HORIZON'])
        self.assertEqual(config.task.discount, defaults['DISCOUNT'])
        self.assertEqual(config.task.level, defaults['LEVEL'])
        self.assertEqual(config.iterations, defaults['ITERATIONS'])
        self.assertEqual(config.trainer.k_val, defaults['K_VAL'])
        self.assertEqual(config.loss_weights, tuple(defaults['LOSS_WEIGHTS']))

    def test_sections_from_file(self):
        payload = {
            'task': {'horizon': 10, 'obstacles': [{'center': [0.0, 1.0], 'radius': 0.5}]},
            'trainer': {'certificate_hidden': [4, 4], 'safe_source': 'dataset'},
            'loss': {'a3': 2.0},
            'solver': {'terminal_obstacle': True},
            'baseline': {'candidates': 0},
            'run': {'iterations': 2, 'seed': 7, 'behind_offsets': [0.25]},
        }
        with tempfile.TemporaryDirectory() as tmp:
            config = load_run_config(write_config(tmp, payload))
        self.assertEqual(config.task.horizon, 10)
        self.assertEqual(config.task.obstacles[0].center, (0.0, 1.0))
        self.assertEqual(config.trainer.certificate_hidden, (4, 4))
        self.assertEqual(config.trainer.safe_source, 'dataset')
        self.assertEqual(config.trainer.seed, 7)
        self.assertEqual(config.loss_weights, (1.0, 1.0, 2.0, 1.0, 1.0))
        self.assertTrue(config.solver.terminal_obstacle)
        self.assertEqual(config.baseline_candidates, 0)
        self.assertEqual(config.behind_offsets, (0.25,))
        self.assertEqual(config.seed, 7)

    def test_invalid_discount_names_field(self):
        with self.assertRaises(ConfigurationError) as context:
            load_run_config(overrides=['task.discount=1.2'])
        self.assertTrue(any(error.startswith('task.discount:') for error in context.exception.errors))
        self.assertEqual(context.exception.exit_code, 2)

    def test_every_section_reports_its_field(self):
        """Test out-of-domain values in each section produce a field-specific message"""
        cases = {
            'task.horizon=0': 'task.horizon',
            'task.goal_tolerance=-1': 'task.goal_tolerance',
            'trainer.k_val=0': 'trainer.k_val',
            'trainer.optimizer="rmsprop"': 'trainer.optimizer',
            'trainer.safe_source="grid"': 'trainer.safe_source',
            'loss.a2=0': 'loss.a2',
            'solver.max_outer=0': 'solver.max_outer',
            'solver.obstacle_margin=-0.1': 'solver.obstacle_margin',
            'baseline.terminal_tol=0': 'baseline.terminal_tol',
            'run.iterations=0': 'run.iterations',
            'run.bootstrap_tolerance=2': 'run.bootstrap_tolerance',
            'run.heatmap_resolution=1': 'run.heatmap_resolution',
        }
        for override, field in cases.items():
            with self.assertRaises(ConfigurationError, msg=override) as context:
                load_run_config(overrides=[override])
            self.assertTrue(any(error.startswith(f'{field}:') for error in context.exception.errors),
                            msg=f'{override}: {context.exception.errors}')

    def test_cross_field_errors(self):
        with self.assertRaises(ConfigurationError) as context:
            load_run_config(overrides=['task.max_steps=5'])
        self.assertIn('task.max_steps: Max steps must be at least the horizon.', context.exception.errors)

    def test_unknown_section(self):
        with self.assertRaises(ConfigurationError) as context:
            load_run_config(overrides=['plotting.dpi=300'])
        self.assertIn('plotting: Unknown section.', context.exception.errors)

    def test_seed_override(self):
        config = load_run_config(overrides=['run.seed=3'], seed=11)
        self.assertEqual(config.seed, 11)
        self.assertEqual(config.trainer_for(1).seed, 1011)

    def test_unreadable_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'broken.json'
            path.write_text('{"task": ')
            with self.assertRaises(ConfigurationError):
                load_run_config(path)
            with self.assertRaises(ConfigurationError):
                load_run_config(Path(tmp) / 'missing.json')


class OverrideTestCase(SimpleTestCase):
    """Test cases for --set overrides"""

    def test_parse_values(self):
        self.assertEqual(parse_override('task.horizon=5'), ('task', 'horizon', 5))
        self.assertEqual(parse_override('run.output_dir=runs/a'), ('run', 'output_dir', 'runs/a'))
        self.assertEqual(parse_override('task.goal=[1, 0, 0]'), ('task', 'goal', [1, 0, 0]))

    def test_malformed(self):
        with self.assertRaises(ConfigurationError):
            parse_override('horizon=5')
        with self.assertRaises(ConfigurationError):
            parse_override('task.horizon')

    def test_overrides_do_not_touch_input(self):
        payload = {'task': {'horizon': 4}}
        updated = apply_overrides(payload, ['task.horizon=6'], seed=2)
        self.assertEqual(payload, {'task': {'horizon': 4}})
        self.assertEqual(updated, {'task': {'horizon': 6}, 'run': {'seed': 2}})


class ErrorFlatteningTestCase(SimpleTestCase):
    """Test cases for error flattening"""

    def test_nested_errors(self):
        errors = {
            'task': {'discount': ['Bad.'], 'obstacles': [{}, {'radius': ['Must be positive.']}]},
            'non_field_errors': ['Broken.'],
        }
        self.assertEqual(flatten_errors(errors), [
            'task.discount: Bad.',
            'task.obstacles[1].radius: Must be positive.',
            'Broken.',
        ])

    def test_error_payload(self):
        payload = error_response('Validation failed', {'run': ['Bad.']})
        self.assertEqual(payload, {'status': False, 'message': 'Validation failed', 'errors': ['run: Bad.']})
