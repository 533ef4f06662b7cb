from django.core.management.base import BaseCommand

from Certmpc.runner.exporters import verify_certificate
from Certmpc.runner.mixins import StandardCommandMixin


class Command(StandardCommandMixin, BaseCommand):
    help = 'Check a certificate against every condition on fresh uniform samples.'

    def add_arguments(self, parser):
        self.add_config_arguments(parser)
        parser.add_argument('--cert', required=True, help='Certificate parameter file.')
        parser.add_argument('--policy', required=True, help='Policy parameter file.')
        parser.add_argument('--dataset', default=None,
                            help='Dataset (JSON Lines); defaults to the initial dataset of the task.')
        parser.add_argument('--n-test', type=int, default=None, help='Number of validation samples.')

    def execute_command(self, options):
        config = self.load_config(options)
        cert, policy = self.load_networks(options['cert'], options['policy'])
        data = self.load_dataset(options['dataset'], config)
        n_test = options['n_test'] or config.trainer.n_test
        report = verify_certificate(cert, policy, config.task, data, n_test, config.seed,
                                    counts=(config.trainer.n_safe, config.trainer.n_unsafe))
        return f"Overall violation rate {report['overall_rate']:.4f}", report
