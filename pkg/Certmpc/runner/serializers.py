"""
Run-config schema.

A run config is one JSON object with the optional sections ``task``,
``trainer``, ``loss``, ``solver``, ``baseline`` and ``run``; every missing
key falls back to the CERTMPC settings. Example::

    {
      "task": {"horizon": 15, "discount": 0.8, "level": 7.0},
      "trainer": {"iterations": 20000, "k_val": 100},
      "loss": {"a1": 1, "a2": 1, "a3": 1, "a4": 1, "a5": 1},
      "solver": {"obstacle_margin": 0.01},
      "baseline": {"candidates": 10},
      "run": {"iterations": 5, "seed": 0, "output_dir": "runs/benchmark"}
    }
"""
import json
import logging
from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from Certmpc.certificates.regions import SAFE_SOURCES
from Certmpc.dynamics.serializers import TaskSerializer, build_task
from Certmpc.exceptions import CertmpcError, ConfigurationError
from Certmpc.iterations.config import RunConfig, trainer_from_settings
from Certmpc.neural.optimizers import METHODS
from Certmpc.ocp.solver import SolverConfig
from .response_utils import flatten_errors

logger = logging.getLogger(__name__)

SECTIONS = ('task', 'trainer', 'loss', 'solver', 'baseline', 'run')


def positive(value, label):
    if value <= 0:
        raise serializers.ValidationError(f'{label} must be positive.')
    return value


def at_least_one(value, label):
    if value < 1:
        raise serializers.ValidationError(f'{label} must be at least 1.')
    return value


class TrainerSerializer(serializers.Serializer):
    """Serializer for the ``trainer`` section"""
    iterations = serializers.IntegerField(required=False, min_value=0)
    k_val = serializers.IntegerField(required=False)
    n_test = serializers.IntegerField(required=False)
    n_safe = serializers.IntegerField(required=False, min_value=0)
    n_unsafe = serializers.IntegerField(required=False, min_value=0)
    batch_size = serializers.IntegerField(required=False)
    learning_rate = serializers.FloatField(required=False)
    optimizer = serializers.ChoiceField(choices=METHODS, required=False)
    certificate_hidden = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False)
    policy_hidden = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False)
    certificate_output_dim = serializers.IntegerField(required=False)
    alpha = serializers.FloatField(required=False, allow_null=True)
    inflate = serializers.FloatField(required=False, min_value=0.0)
    theta_jitter = serializers.FloatField(required=False, min_value=0.0)
    safe_source = serializers.ChoiceField(choices=SAFE_SOURCES, required=False)
    max_counterexamples = serializers.IntegerField(required=False, min_value=0)

    def validate_k_val(self, value):
        return at_least_one(value, 'k_val')

    def validate_n_test(self, value):
        return at_least_one(value, 'n_test')

    def validate_batch_size(self, value):
        return at_least_one(value, 'Batch size')

    def validate_learning_rate(self, value):
        return positive(value, 'Learning rate')

    def validate_certificate_output_dim(self, value):
        return at_least_one(value, 'Certificate output dimension')

    def validate_alpha(self, value):
        """Validate that a fixed alpha is positive; null selects it automatically"""
        if value is not None and value <= 0:
            raise serializers.ValidationError('Alpha must be positive.')
        return value


class LossSerializer(serializers.Serializer):
    """Serializer for the ``loss`` section (weights a1..a5)"""
    a1 = serializers.FloatField(required=False)
    a2 = serializers.FloatField(required=False)
    a3 = serializers.FloatField(required=False)
    a4 = serializers.FloatField(required=False)
    a5 = serializers.FloatField(required=False)

    def validate(self, attrs):
        errors = {name: 'Loss weight must be positive.' for name, value in attrs.items() if value <= 0}
        if errors:
            raise serializers.ValidationError(errors)
        defaults = list(settings.CERTMPC['LOSS_WEIGHTS'])
        return tuple(attrs.get(f'a{index + 1}', defaults[index]) for index in range(5))


class SolverSerializer(serializers.Serializer):
    """Serializer for the ``solver`` section"""
    kkt_tol = serializers.FloatField(required=False)
    constraint_tol = serializers.FloatField(required=False)
    fallback_tol = serializers.FloatField(required=False)
    max_outer = serializers.IntegerField(required=False)
    max_inner = serializers.IntegerField(required=False)
    lbfgs_memory = serializers.IntegerField(required=False)
    initial_penalty = serializers.FloatField(required=False)
    penalty_growth = serializers.FloatField(required=False)
    obstacle_margin = serializers.FloatField(required=False, min_value=0.0)
    terminal_obstacle = serializers.BooleanField(required=False)
    normalize_discount = serializers.BooleanField(required=False)
    step_budget_ms = serializers.FloatField(required=False)

    def validate(self, attrs):
        errors = {}
        for name in ('kkt_tol', 'constraint_tol', 'fallback_tol', 'initial_penalty', 'step_budget_ms'):
            if name in attrs and attrs[name] <= 0:
                errors[name] = 'Must be positive.'
        for name in ('max_outer', 'max_inner', 'lbfgs_memory'):
            if name in attrs and attrs[name] < 1:
                errors[name] = 'Must be at least 1.'
        if 'penalty_growth' in attrs and attrs['penalty_growth'] < 1:
            errors['penalty_growth'] = 'Must be at least 1.'
        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class BaselineSerializer(serializers.Serializer):
    """Serializer for the ``baseline`` section"""
    candidates = serializers.IntegerField(required=False, min_value=0, help_text='0 tries every stored state.')
    terminal_tol = serializers.FloatField(required=False)

    def validate_terminal_tol(self, value):
        return positive(value, 'Terminal tolerance')


class RunSectionSerializer(serializers.Serializer):
    """Serializer for the ``run`` section"""
    iterations = serializers.IntegerField(required=False)
    seed = serializers.IntegerField(required=False, min_value=0)
    output_dir = serializers.CharField(required=False)
    initial_trajectory = serializers.CharField(required=False, allow_null=True)
    behind_offsets = serializers.ListField(child=serializers.FloatField(), required=False)
    plant_substeps = serializers.IntegerField(required=False)
    bootstrap_tolerance = serializers.FloatField(required=False)
    heatmap_theta = serializers.FloatField(required=False, allow_null=True)
    heatmap_resolution = serializers.IntegerField(required=False)
    ledger = serializers.BooleanField(required=False)
    label = serializers.CharField(required=False, allow_blank=True)

    def validate_iterations(self, value):
        return at_least_one(value, 'Iterations')

    def validate_plant_substeps(self, value):
        return at_least_one(value, 'Plant substeps')

    def validate_heatmap_resolution(self, value):
        if value < 2:
            raise serializers.ValidationError('Heatmap resolution must be at least 2.')
        return value

    def validate_bootstrap_tolerance(self, value):
        if not 0.0 <= value <= 1.0:
            raise serializers.ValidationError('Bootstrap tolerance must lie between 0 and 1.')
        return value

    def validate_behind_offsets(self, value):
        if any(offset <= 0 for offset in value):
            raise serializers.ValidationError('Offsets must be positive.')
        return value

    def validate_initial_trajectory(self, value):
        if value is not None and not Path(value).exists():
            raise serializers.ValidationError(f'File {value} does not exist.')
        return value


class RunConfigSerializer(serializers.Serializer):
    """Serializer for a whole run config"""
    task = TaskSerializer(required=False)
    trainer = TrainerSerializer(required=False)
    loss = LossSerializer(required=False)
    solver = SolverSerializer(required=False)
    baseline = BaselineSerializer(required=False)
    run = RunSectionSerializer(required=False)

    def validate(self, attrs):
        """Reject unknown sections; nested serializers only see their own keys"""
        unknown = sorted(set(self.initial_data) - set(SECTIONS))
        if unknown:
            raise serializers.ValidationError({name: 'Unknown section.' for name in unknown})
        return attrs


def parse_override(text):
    """``section.key=value`` with a JSON value (bare words are kept as strings)."""
    if '=' not in text or '.' not in text.split('=', 1)[0]:
        raise ConfigurationError(errors=[f'--set: expected section.key=value, got {text!r}.'])
    path, raw = text.split('=', 1)
    section, key = path.split('.', 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return section.strip(), key.strip(), value


def read_config_file(path):
    if path is None:
        return {}
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(errors=[f'config: cannot read {path} ({exc.strerror}).'])
    except json.JSONDecodeError as exc:
        raise ConfigurationError(errors=[f'config: {path} is not valid JSON ({exc.msg} at line {exc.lineno}).'])
    if not isinstance(payload, dict):
        raise ConfigurationError(errors=['config: top level must be an object.'])
    return payload


def apply_overrides(payload, overrides=(), seed=None):
    payload = {section: dict(values) if isinstance(values, dict) else values
               for section, values in payload.items()}
    for text in overrides or ():
        section, key, value = parse_override(text)
        target = payload.setdefault(section, {})
        if not isinstance(target, dict):
            raise ConfigurationError(errors=[f'{section}: must be an object.'])
        target[key] = value
    if seed is not None:
        payload.setdefault('run', {})['seed'] = seed
    return payload


def validate_payload(payload):
    """Validated section values; errors become a ConfigurationError with ``field: message`` lines."""
    serializer = RunConfigSerializer(data=payload)
    if not serializer.is_valid():
        errors = flatten_errors(serializer.errors)
        logger.error('Run config rejected: %s', '; '.join(errors))
        raise ConfigurationError(errors=errors)
    return serializer.validated_data


def build_run_config(values):
    defaults = settings.CERTMPC
    run = dict(values.get('run', {}))
    baseline = values.get('baseline', {})
    task_values = values.get('task') or TaskSerializer().validate({})
    trainer = {key: tuple(value) if isinstance(value, list) else value
               for key, value in values.get('trainer', {}).items()}
    try:
        task, wheels = build_task(task_values)
        seed = run.pop('seed', defaults['SEED'])
        params = {
            'task': task,
            'wheels': wheels,
            'trainer': trainer_from_settings(**trainer, seed=seed),
            'solver': SolverConfig.from_settings(**values.get('solver', {})),
            'seed': seed,
        }
        if 'loss' in values:
            params['loss_weights'] = values['loss']
        if 'candidates' in baseline:
            params['baseline_candidates'] = baseline['candidates']
        if 'terminal_tol' in baseline:
            params['baseline_terminal_tol'] = baseline['terminal_tol']
        if 'behind_offsets' in run:
            run['behind_offsets'] = tuple(run['behind_offsets'])
        params.update(run)
        return RunConfig.from_settings(**params)
    except ConfigurationError:
        raise
    except CertmpcError as exc:
        raise ConfigurationError(errors=[exc.message], details=exc.details)


def load_run_config(path=None, overrides=(), seed=None):
    """
    Read, override and validate a run config into a RunConfig.

    ``overrides`` are ``section.key=value`` strings applied before
    validation; ``seed`` replaces ``run.seed``.
    """
    payload = apply_overrides(read_config_file(path), overrides, seed)
    config = build_run_config(validate_payload(payload))
    logger.info('Run config: %d iterations, N=%d, gamma=%.3g, c=%.3g, seed %d', config.iterations,
                config.task.horizon, config.task.discount, config.task.level, config.seed)
    return config
