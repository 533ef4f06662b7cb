from django.core.management.base import BaseCommand

from Certmpc.iterations.orchestrator import run_all
from Certmpc.runner.mixins import StandardCommandMixin


class Command(StandardCommandMixin, BaseCommand):
    help = 'Run every iteration of the certificate-based learning MPC and write the run artifacts.'

    def add_arguments(self, parser):
        self.add_config_arguments(parser)
        parser.add_argument('--output-dir', default=None, help='Override run.output_dir.')

    def execute_command(self, options):
        config = self.load_config(options, output_dir=options['output_dir'])
        result = run_all(config)
        return 'Run completed', {
            'output_dir': config.output_dir,
            'seed': config.seed,
            'iterations': [report.table_entry() for report in result.reports],
        }
