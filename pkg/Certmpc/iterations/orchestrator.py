"""
The iterative learning loop.

Each iteration drives the plant from the fixed start state with the MPC
controller whose terminal ingredient is the certificate fitted after the
previous iteration, adds the closed-loop trajectory to the dataset and fits
the next certificate, warm-started from the current one.
"""
import logging
from dataclasses import dataclass

import numpy as np

from Certmpc.certificates.trainer import (
    check_containment, estimate_violation_bounds, terminal_delta1, train_certificate, uniform_states,
)
from Certmpc.dynamics.tasks import (
    DiscountedCost, discounted_cost, in_unsafe, substep_plant, wheel_velocities,
)
from Certmpc.exceptions import AssumptionViolationError, ContractViolationError, SafetyViolationError, SolverFailureError
from Certmpc.certificates.datasets import Trajectory
from Certmpc.ocp.solver import CertificateTerminal, OcpProblem, cold_start, mpc_step, solve
from .initial import initial_dataset
from .reports import IterationReport, RunArtifacts, StepRecord, performance_summary, record_iteration

logger = logging.getLogger(__name__)

PROPOSED = 'proposed'


@dataclass(eq=False)
class BootstrapResult:
    certificate: object
    policy: object
    training: object
    outside_fraction: float
    initial_solution: object


@dataclass(eq=False)
class IterationOutcome:
    trajectory: Trajectory
    steps: list
    goal_error: float


@dataclass(eq=False)
class RunResult:
    reports: list
    data: object
    certificate: object
    policy: object


class ProposedController:
    """Receding-horizon controller with the certificate as terminal cost and constraint."""

    def __init__(self, task, certificate, policy, solver_config):
        self.task = task
        self.terminal = CertificateTerminal(certificate)
        self.certificate = certificate
        self.policy = policy
        self.solver_config = solver_config
        self.warm = None

    def __call__(self, state, t):
        problem = OcpProblem(self.task, self.terminal, state, time=t, config=self.solver_config)
        warm = self.warm if self.warm is not None else cold_start(self.task, self.policy, state)
        applied, self.warm, solution = mpc_step(problem, warm, self.policy)
        delta1 = terminal_delta1(self.certificate, self.policy, self.task, solution.terminal_state)
        stage = float(self.task.stage_cost(state[None, :], applied[None, :])[0])
        audit = {
            'delta1_terminal': delta1,
            'stability_flag': bool(delta1 < self.task.discount ** (-problem.horizon) * stage),
        }
        return applied, solution, audit


def normalized_objective(task, solution_objective, t, normalized):
    return solution_objective if normalized else solution_objective / task.discount ** t


def fill_lyapunov_gaps(task, steps, normalized):
    """
    gamma J(x_t+1) - J(x_t) + l(x_t, u_t) in time-normalized form; positive
    values mean the closed-loop cost did not decrease as guaranteed.
    """
    for current, following in zip(steps[:-1], steps[1:]):
        j_now = normalized_objective(task, current.objective, current.t, normalized)
        j_next = normalized_objective(task, following.objective, following.t, normalized)
        stage = float(task.stage_cost(current.state[None, :], current.applied[None, :])[0])
        current.lyapunov_gap = task.discount * j_next - j_now + stage


def execute_closed_loop(task, controller, plant, wheels, iteration, method=PROPOSED):
    """Drive the plant from the start state until the goal tolerance or the step limit."""
    x = task.start.copy()
    states, inputs, steps = [x], [], []
    for t in range(task.max_steps):
        if np.linalg.norm(x - task.goal) <= task.goal_tolerance:
            break
        applied, solution, audit = controller(x, t)
        x_next, path = plant(x, applied)
        if np.any(in_unsafe(task, path)):
            raise SafetyViolationError(
                f'closed-loop state entered the unsafe set at t={t + 1}',
                details={'iteration': iteration, 'method': method, 't': t + 1, 'state': x_next.tolist(),
                         'trace': [state.tolist() for state in states + [x_next]],
                         'inputs': [u.tolist() for u in inputs + [applied]]}
            )
        steps.append(StepRecord(
            t=t,
            state=x,
            applied=applied,
            status=solution.status,
            objective=solution.objective,
            residuals=solution.residuals,
            iterations=solution.iterations,
            wall_time_ms=solution.wall_time_ms,
            wheels=wheel_velocities(wheels, applied[0], applied[1]),
            **audit,
        ))
        states.append(x_next)
        inputs.append(applied)
        x = x_next

    goal_error = float(np.linalg.norm(states[-1] - task.goal))
    if goal_error > task.goal_tolerance:
        logger.warning('Iteration %d (%s) stopped %.3e away from the goal after %d steps',
                       iteration, method, goal_error, len(inputs))
    trajectory = Trajectory.from_run(task, iteration, np.array(states),
                                     np.array(inputs).reshape(-1, task.input_dim), method=method)
    return IterationOutcome(trajectory, steps, goal_error)


def cost_trend_ok(task, iteration, method, cost, previous_cost, slack, goal_error):
    """
    J^j <= J^{j-1} + slack, counted only for iterations that reached the goal;
    a truncated run that stopped short has no comparable cost.
    """
    if goal_error > task.goal_tolerance:
        logger.warning('Iteration %d (%s) did not reach the goal (error %.3e); cost trend check fails',
                       iteration, method, goal_error)
        return False
    if cost.value > previous_cost + slack + 1e-12:
        logger.warning('Iteration %d (%s) cost %.4f exceeds previous %.4f plus slack %.3g',
                       iteration, method, cost.value, previous_cost, slack)
        return False
    return True


def trajectory_cost(task, trajectory):
    """Discounted closed-loop cost of a recorded trajectory, with its truncation bound."""
    if not len(trajectory.inputs):
        return DiscountedCost(0.0, 0.0, task.stage_cost_bound() / (1.0 - task.discount), 0)
    return discounted_cost(task, trajectory.states[:-1], trajectory.inputs)


def bootstrap(initial_data, task, config, certificate=None, policy=None):
    """
    First certificate and policy: trained on the initial dataset unless
    supplied. The certified region must hold the initial data (up to
    ``config.bootstrap_tolerance``) and the problem must be solvable at the
    start state.
    """
    if initial_data is None or initial_data.is_empty:
        raise AssumptionViolationError('initial dataset is empty')
    training = None
    if certificate is None:
        training = train_certificate(initial_data, task, config.trainer_for(0), config.weights())
        certificate, policy = training.certificate, training.policy
    elif policy is None:
        raise ContractViolationError('a supplied certificate needs its policy')

    states = initial_data.states(state_dim=task.state_dim)
    outside = certificate.values(states) > certificate.level
    fraction = float(np.mean(outside))
    logger.info('Initial certificate: %.2f%% of %d dataset states outside V <= c', 100 * fraction, len(states))
    if fraction > config.bootstrap_tolerance:
        raise AssumptionViolationError(
            f'{100 * fraction:.2f}% of the initial data lies outside the certified region',
            details={'fraction': fraction, 'outside': int(outside.sum()), 'states': len(states),
                     'tolerance': config.bootstrap_tolerance}
        )

    problem = OcpProblem(task, CertificateTerminal(certificate), task.start, time=0, config=config.solver)
    try:
        solution = solve(problem, cold_start(task, policy, task.start))
    except SolverFailureError as exc:
        raise AssumptionViolationError('no feasible solution at the start state under the initial certificate',
                                       details=exc.details)
    return BootstrapResult(certificate, policy, training, fraction, solution)


def run_iteration(iteration, task, certificate, policy, config, plant=None):
    """Closed-loop run of one iteration with the frozen certificate of the previous one."""
    plant = plant or substep_plant(task, config.plant_substeps)
    controller = ProposedController(task, certificate, policy, config.solver)
    outcome = execute_closed_loop(task, controller, plant, config.wheels, iteration)
    fill_lyapunov_gaps(task, outcome.steps, config.solver.normalize_discount)
    return outcome


def initial_report(task, data, method=PROPOSED):
    trajectory = data.executed()[0]
    return IterationReport(
        iteration=0,
        method=method,
        cost=trajectory_cost(task, trajectory),
        trajectory=trajectory,
        goal_error=float(np.linalg.norm(trajectory.states[-1] - task.goal)),
    )


def certificate_bounds(certificate, policy, data, task, config, training, seed):
    if training is not None:
        return training.bounds, training.report.overall_rate
    bounds = estimate_violation_bounds(certificate, policy, data, task, config.trainer.n_test, seed)
    return bounds, None


def run_all(config, initial_data=None, certificate=None, policy=None, artifacts=None):
    """
    Run every iteration of the learning loop.

    Artifacts are written after each iteration, so a failing iteration leaves
    the reports of the completed ones on disk.
    """
    task = config.task
    data = initial_data if initial_data is not None else initial_dataset(
        task, config.behind_offsets, config.initial_trajectory)
    if artifacts is None and config.output_dir is not None:
        artifacts = RunArtifacts(config.output_dir)
    label = config.label or (str(config.output_dir) if config.output_dir is not None else 'run')

    boot = bootstrap(data, task, config, certificate, policy)
    certificate, policy, training = boot.certificate, boot.policy, boot.training
    theta = config.heatmap_theta if config.heatmap_theta is not None else 0.0
    reports = [initial_report(task, data)]
    if artifacts is not None:
        artifacts.write_dataset(data)
        artifacts.write_networks(0, certificate, policy)
        artifacts.write_region(0, training.regions if training else None)
        artifacts.write_heatmap(0, certificate, task, theta, config.heatmap_resolution)
        artifacts.write_summary(reports)
    if config.ledger:
        record_iteration(label, reports[0])

    plant = substep_plant(task, config.plant_substeps)
    containment = None
    gamma_n = task.discount ** task.horizon
    for iteration in range(1, config.iterations + 1):
        bounds, violation_rate = certificate_bounds(certificate, policy, data, task, config, training,
                                                    config.seed + 7919 * iteration)
        outcome = run_iteration(iteration, task, certificate, policy, config, plant)
        data = data.updated(outcome.trajectory)

        delta1_max = max((step.delta1_terminal for step in outcome.steps), default=0.0)
        slack = gamma_n * (delta1_max + bounds.delta2) / (1.0 - task.discount)
        cost = trajectory_cost(task, outcome.trajectory)
        previous_cost = reports[-1].cost.value
        trend_ok = cost_trend_ok(task, iteration, PROPOSED, cost, previous_cost, slack, outcome.goal_error)
        report = IterationReport(
            iteration=iteration,
            method=PROPOSED,
            cost=cost,
            trajectory=outcome.trajectory,
            steps=outcome.steps,
            goal_error=outcome.goal_error,
            delta1_max=delta1_max,
            delta2=bounds.delta2,
            containment_fraction=containment.fraction if containment else None,
            violation_rate=violation_rate,
            trend_slack=slack,
            trend_ok=trend_ok,
        )
        reports.append(report)
        logger.info('Iteration %d: cost %.4f (undiscounted %.4f), %d steps, mean solve %.1f ms, '
                    'delta1 %.3g, delta2 %.3g', iteration, cost.value, cost.undiscounted, cost.steps,
                    report.mean_solve_ms or 0.0, delta1_max, bounds.delta2)
        if artifacts is not None:
            artifacts.write_dataset(data)
            artifacts.write_steps(report)
            artifacts.write_summary(reports)
        if config.ledger:
            record_iteration(label, report)

        if iteration == config.iterations:
            break
        training = train_certificate(data, task, config.trainer_for(iteration), config.weights(),
                                     previous=(certificate, policy))
        samples = uniform_states(task, config.trainer.n_test, config.seed + 104729 * iteration)
        containment = check_containment(certificate, training.certificate, task.level, samples)
        logger.info('Certificate %d: containment loss %.4f, violation rate %.4f', iteration,
                    containment.fraction, training.report.overall_rate)
        certificate, policy = training.certificate, training.policy
        if artifacts is not None:
            artifacts.write_networks(iteration, certificate, policy)
            artifacts.write_region(iteration, training.regions)
            artifacts.write_heatmap(iteration, certificate, task, theta, config.heatmap_resolution)

    if artifacts is not None:
        table = performance_summary(reports)
        artifacts.write_performance(table)
        logger.info('Performance summary\n%s', table.text())
    return RunResult(reports, data, certificate, policy)
