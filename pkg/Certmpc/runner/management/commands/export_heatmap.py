from pathlib import Path

from django.core.management.base import BaseCommand

from Certmpc.exceptions import ConfigurationError
from Certmpc.neural.utils import load_params
from Certmpc.runner.exporters import heatmap_name, write_heatmap
from Certmpc.runner.mixins import StandardCommandMixin


class Command(StandardCommandMixin, BaseCommand):
    help = 'Export V(z, y, theta) on a grid with the certified-level flag as CSV.'

    def add_arguments(self, parser):
        self.add_config_arguments(parser)
        parser.add_argument('--cert', required=True, help='Certificate parameter file.')
        parser.add_argument('--theta', type=float, default=None, help='Fixed heading; defaults to run.heatmap_theta.')
        parser.add_argument('--resolution', type=int, default=None, help='Grid points per axis.')
        parser.add_argument('--output', default=None, help='CSV path; defaults to the run directory.')
        parser.add_argument('--no-script', action='store_true', help='Skip the gnuplot script.')

    def execute_command(self, options):
        config = self.load_config(options)
        if not Path(options['cert']).exists():
            raise ConfigurationError(errors=[f"cert: parameter file {options['cert']} does not exist."])
        cert = load_params(options['cert'], 'certificate')
        theta = options['theta'] if options['theta'] is not None else (config.heatmap_theta or 0.0)
        resolution = options['resolution'] or config.heatmap_resolution
        if resolution < 2:
            raise ConfigurationError(errors=['resolution: must be at least 2.'])
        output = Path(options['output']) if options['output'] else config.output_dir / heatmap_name(
            Path(options['cert']).stem, theta)
        fraction = write_heatmap(output, cert, config.task, theta, resolution, script=not options['no_script'])
        return 'Heatmap exported', {
            'output': output,
            'theta': theta,
            'rows': resolution * resolution,
            'certified_fraction': fraction,
        }
