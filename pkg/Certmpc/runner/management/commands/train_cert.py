from pathlib import Path

from django.core.management.base import BaseCommand

from Certmpc.certificates.alpha_shape import write_polygon_csv
from Certmpc.certificates.trainer import train_certificate
from Certmpc.neural.utils import save_params
from Certmpc.runner.mixins import StandardCommandMixin


class Command(StandardCommandMixin, BaseCommand):
    help = 'Train a certificate and policy pair on a trajectory dataset.'

    def add_arguments(self, parser):
        self.add_config_arguments(parser)
        parser.add_argument('--dataset', default=None,
                            help='Dataset (JSON Lines); defaults to the initial dataset of the task.')
        parser.add_argument('--previous-cert', default=None, help='Certificate to warm-start from.')
        parser.add_argument('--previous-policy', default=None, help='Policy to warm-start from.')
        parser.add_argument('--iteration', type=int, default=0, help='Index used for seeds and file names.')
        parser.add_argument('--output-dir', default=None, help='Override run.output_dir.')

    def execute_command(self, options):
        config = self.load_config(options, output_dir=options['output_dir'])
        data = self.load_dataset(options['dataset'], config)
        previous = None
        if options['previous_cert'] or options['previous_policy']:
            previous = self.load_networks(options['previous_cert'], options['previous_policy'])

        iteration = options['iteration']
        result = train_certificate(data, config.task, config.trainer_for(iteration), config.weights(), previous)
        output = Path(config.output_dir)
        cert_path = save_params(output / f'cert_{iteration}.params', result.certificate)
        policy_path = save_params(output / f'policy_{iteration}.params', result.policy)
        if result.regions.shape is not None:
            write_polygon_csv(output / f'alpha_{iteration}.csv', result.regions.shape)
        return 'Certificate trained', {
            'certificate': cert_path,
            'policy': policy_path,
            'delta1_max': result.bounds.delta1,
            'delta2': result.bounds.delta2,
            'report': result.report.as_dict(),
            'history': result.history,
        }
