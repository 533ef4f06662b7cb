from django.core.management.base import BaseCommand

from Certmpc.certificates.trainer import terminal_delta1
from Certmpc.ocp.solver import CertificateTerminal, OcpProblem, cold_start, solve
from Certmpc.runner.mixins import StandardCommandMixin


class Command(StandardCommandMixin, BaseCommand):
    help = 'Solve the finite-horizon problem once with a certificate as terminal ingredient.'

    def add_arguments(self, parser):
        self.add_config_arguments(parser)
        parser.add_argument('--cert', required=True, help='Certificate parameter file.')
        parser.add_argument('--policy', required=True, help='Policy parameter file (cold start).')
        parser.add_argument('--state', type=float, nargs=3, metavar=('Z', 'Y', 'THETA'), default=None,
                            help='Initial state; defaults to the task start.')
        parser.add_argument('--time', type=int, default=0, help='Time index t of the problem.')

    def execute_command(self, options):
        config = self.load_config(options)
        cert, policy = self.load_networks(options['cert'], options['policy'])
        task = config.task
        state = options['state'] if options['state'] is not None else task.start
        problem = OcpProblem(task, CertificateTerminal(cert), state, time=options['time'], config=config.solver)
        solution = solve(problem, cold_start(task, policy, problem.state))
        data = solution.diagnostics()
        data['delta1_terminal'] = terminal_delta1(cert, policy, task, solution.terminal_state)
        return f'Solve finished with status {solution.status}', data
