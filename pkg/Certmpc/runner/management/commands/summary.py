from pathlib import Path

from django.core.management.base import BaseCommand

from Certmpc.exceptions import ConfigurationError
from Certmpc.iterations.reports import load_table_entries, performance_summary
from Certmpc.runner.exporters import write_csv
from Certmpc.runner.mixins import StandardCommandMixin


class Command(StandardCommandMixin, BaseCommand):
    help = 'Cost and solve-time table of a run, optionally next to a baseline run.'

    def add_arguments(self, parser):
        parser.add_argument('run_dir', help='Run directory holding summary.csv.')
        parser.add_argument('--baseline-dir', default=None, help='Baseline run directory.')
        parser.add_argument('--output', default=None, help='CSV path; defaults to <run_dir>/comparison.csv.')

    def entries(self, directory):
        if not (Path(directory) / 'summary.csv').exists():
            raise ConfigurationError(errors=[f'run_dir: {directory} holds no summary.csv.'])
        return load_table_entries(directory)

    def execute_command(self, options):
        reports = self.entries(options['run_dir'])
        baseline = self.entries(options['baseline_dir']) if options['baseline_dir'] else None
        table = performance_summary(reports, baseline)
        output = Path(options['output']) if options['output'] else Path(options['run_dir']) / 'comparison.csv'
        write_csv(output, table.header, table.rows)
        self.stdout.write(table.text())
        return 'Summary written', {'output': output, 'header': table.header, 'rows': table.rows}
