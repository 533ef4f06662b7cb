from dataclasses import replace

from django.core.management.base import BaseCommand

from Certmpc.baseline.lmpc import baseline_run
from Certmpc.runner.mixins import StandardCommandMixin


class Command(StandardCommandMixin, BaseCommand):
    help = 'Run the sampled-safe-set LMPC baseline on the same initial data.'

    def add_arguments(self, parser):
        self.add_config_arguments(parser)
        parser.add_argument('--candidates', type=int, default=None,
                            help='Nearest stored states tried per step; 0 tries all of them.')
        parser.add_argument('--output-dir', default=None, help='Defaults to <run.output_dir>/baseline.')

    def execute_command(self, options):
        if options['candidates'] is not None:
            options['overrides'] = list(options['overrides']) + [f"baseline.candidates={options['candidates']}"]
        config = self.load_config(options, output_dir=options['output_dir'])
        if options['output_dir'] is None:
            config = replace(config, output_dir=config.output_dir / 'baseline')
        result = baseline_run(config)
        return 'Baseline run completed', {
            'output_dir': config.output_dir,
            'candidates': config.baseline_candidates,
            'iterations': [report.table_entry() for report in result.reports],
        }
