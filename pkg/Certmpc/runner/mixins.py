import json
import logging
from pathlib import Path

import numpy as np
from django.core.management.base import CommandError

from Certmpc.certificates.datasets import TrajectoryDataset
from Certmpc.exceptions import CertmpcError, ConfigurationError
from Certmpc.iterations.initial import initial_dataset
from Certmpc.neural.utils import load_params
from .response_utils import error_response, success_response
from .serializers import load_run_config

logger = logging.getLogger(__name__)


def to_json(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if hasattr(value, '__fspath__'):
        return str(value)
    raise TypeError(f'{type(value).__name__} is not JSON serializable')


class StandardCommandMixin:
    """
    Shared plumbing for the management commands.

    Commands implement ``execute_command(options)`` and return
    ``(message, data)``; this mixin adds the common config arguments, prints
    the standardized payload and turns Certmpc errors into a CommandError
    carrying the exit code.
    """

    def add_config_arguments(self, parser):
        parser.add_argument('config', nargs='?', default=None, help='JSON run-config file.')
        parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                            help='Override one config value (repeatable).')
        parser.add_argument('--seed', type=int, default=None, help='Override run.seed.')

    def load_config(self, options, **run_overrides):
        overrides = list(options.get('overrides') or [])
        overrides += [f'run.{key}={json.dumps(value)}' for key, value in run_overrides.items() if value is not None]
        return load_run_config(options.get('config'), overrides, options.get('seed'))

    def success_response(self, message="Operation successful", data=None):
        payload = success_response(message=message, data=data)
        self.stdout.write(json.dumps(payload, indent=2, default=to_json))
        return payload

    def error_response(self, message="An error occurred", errors=None):
        payload = error_response(message=message, errors=errors)
        self.stderr.write(json.dumps(payload, indent=2, default=to_json))
        return payload

    def handle_exception_response(self, exception):
        """Print the error payload and raise a CommandError with the error's exit code"""
        if isinstance(exception, ConfigurationError):
            errors = exception.errors or [exception.message]
        else:
            errors = [exception.message]
            if exception.details:
                errors.append(json.dumps(exception.details, default=to_json))
        logger.error('%s: %s', type(exception).__name__, exception.message)
        self.error_response(message=exception.message, errors=errors)
        raise CommandError('; '.join(errors[:3]), returncode=exception.exit_code)

    def handle(self, *args, **options):
        try:
            message, data = self.execute_command(options)
        except CertmpcError as exc:
            self.handle_exception_response(exc)
        self.success_response(message=message, data=data)

    def execute_command(self, options):
        raise NotImplementedError

    def load_dataset(self, path, config):
        """Dataset from a JSON Lines file, or the initial dataset of the configured task"""
        if path is None:
            return initial_dataset(config.task, config.behind_offsets, config.initial_trajectory)
        if not Path(path).exists():
            raise ConfigurationError(errors=[f'dataset: file {path} does not exist.'])
        data = TrajectoryDataset.read_jsonl(path)
        data.validate(config.task, dynamics_tol=None)
        return data

    def load_networks(self, cert_path, policy_path):
        for label, path in (('cert', cert_path), ('policy', policy_path)):
            if path is None or not Path(path).exists():
                raise ConfigurationError(errors=[f'{label}: parameter file {path} does not exist.'])
        return load_params(cert_path, 'certificate'), load_params(policy_path, 'policy')
