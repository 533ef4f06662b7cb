"""
Run configuration for the iterative learning loop.

A RunConfig is normally produced by ``Certmpc.runner.serializers`` from a
JSON run-config file; ``RunConfig.from_settings`` builds the default one
from the CERTMPC settings dict.
"""
from dataclasses import dataclass, field, replace
from pathlib import Path

from django.conf import settings

from Certmpc.certificates.losses import LossWeights
from Certmpc.certificates.trainer import TrainerConfig
from Certmpc.dynamics.tasks import WheelGeometry, benchmark_task
from Certmpc.exceptions import ConfigurationError
from Certmpc.ocp.solver import SolverConfig


def trainer_from_settings(**overrides):
    defaults = settings.CERTMPC
    params = {
        'iterations': defaults['TRAIN_ITERATIONS'],
        'k_val': defaults['K_VAL'],
        'n_test': defaults['N_TEST'],
        'n_safe': defaults['N_SAFE'],
        'n_unsafe': defaults['N_UNSAFE'],
        'batch_size': defaults['BATCH_SIZE'],
        'learning_rate': defaults['LEARNING_RATE'],
        'optimizer': defaults['OPTIMIZER'],
        'certificate_hidden': tuple(defaults['CERTIFICATE_HIDDEN']),
        'policy_hidden': tuple(defaults['POLICY_HIDDEN']),
        'certificate_output_dim': defaults['CERTIFICATE_OUTPUT_DIM'],
        'seed': defaults['SEED'],
        'inflate': defaults['ALPHA_INFLATE'],
        'theta_jitter': defaults['THETA_JITTER'],
        'safe_source': defaults['SAFE_SOURCE'],
        'max_counterexamples': defaults['MAX_COUNTEREXAMPLES'],
    }
    params.update(overrides)
    return TrainerConfig(**params)


@dataclass(frozen=True, eq=False)
class RunConfig:
    task: object
    trainer: TrainerConfig
    solver: SolverConfig
    loss_weights: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)
    wheels: WheelGeometry = field(default_factory=WheelGeometry)
    iterations: int = 5
    seed: int = 0
    output_dir: Path = None
    initial_trajectory: Path = None
    behind_offsets: tuple = (0.5, 1.0)
    plant_substeps: int = 1
    bootstrap_tolerance: float = 0.01
    heatmap_theta: float = None
    heatmap_resolution: int = 81
    baseline_candidates: int = 10
    baseline_terminal_tol: float = 1e-4
    ledger: bool = True
    label: str = ''

    def __post_init__(self):
        errors = []
        if self.iterations < 1:
            errors.append('iterations: must be at least 1.')
        if self.task.max_steps < self.task.horizon:
            errors.append('max_steps: must be at least the horizon.')
        if self.plant_substeps < 1:
            errors.append('plant_substeps: must be at least 1.')
        if not 0.0 <= self.bootstrap_tolerance <= 1.0:
            errors.append('bootstrap_tolerance: must lie between 0 and 1.')
        if self.baseline_candidates < 0:
            errors.append('baseline_candidates: must not be negative (0 means every stored state).')
        if any(offset <= 0 for offset in self.behind_offsets):
            errors.append('behind_offsets: offsets must be positive.')
        if errors:
            raise ConfigurationError(errors=errors)
        if self.output_dir is not None:
            object.__setattr__(self, 'output_dir', Path(self.output_dir))
        if self.initial_trajectory is not None:
            object.__setattr__(self, 'initial_trajectory', Path(self.initial_trajectory))

    @classmethod
    def from_settings(cls, **overrides):
        defaults = settings.CERTMPC
        params = {
            'task': benchmark_task(),
            'trainer': trainer_from_settings(),
            'solver': SolverConfig.from_settings(),
            'loss_weights': tuple(defaults['LOSS_WEIGHTS']),
            'wheels': WheelGeometry(defaults['WHEEL_RADIUS'], defaults['WHEEL_BASE'], defaults['SWAP_WHEELS']),
            'iterations': defaults['ITERATIONS'],
            'seed': defaults['SEED'],
            'output_dir': Path(defaults['OUTPUT_DIR']),
            'behind_offsets': tuple(defaults['BEHIND_OFFSETS']),
            'plant_substeps': defaults['PLANT_SUBSTEPS'],
            'bootstrap_tolerance': defaults['BOOTSTRAP_TOLERANCE'],
            'heatmap_theta': defaults['HEATMAP_THETA'],
            'heatmap_resolution': defaults['HEATMAP_RESOLUTION'],
            'baseline_candidates': defaults['BASELINE_CANDIDATES'],
            'baseline_terminal_tol': defaults['BASELINE_TERMINAL_TOL'],
            'ledger': defaults['LEDGER'],
        }
        params.update(overrides)
        return cls(**params)

    def weights(self):
        return LossWeights.for_task(self.task, self.loss_weights)

    def trainer_for(self, iteration):
        """Trainer settings for the certificate fitted after ``iteration``; seeds differ per iteration."""
        return replace(self.trainer, seed=self.seed + 1000 * iteration)
