"""
Baseline iterative LMPC with a sampled safe set as terminal set.

The terminal state of the horizon has to coincide with a stored state.
Instead of a mixed-integer program over all stored states, the K stored
states closest to the warm-start terminal prediction are enumerated: each
one gives a smooth problem with a terminal equality and the stored
cost-to-go as terminal cost, and the cheapest solution is applied.
"""
import logging
import time as clock
from dataclasses import dataclass, replace

import numpy as np

from Certmpc.dynamics.tasks import substep_plant
from Certmpc.exceptions import SolverFailureError
from Certmpc.iterations.initial import initial_dataset
from Certmpc.iterations.orchestrator import (
    RunResult, cost_trend_ok, execute_closed_loop, fill_lyapunov_gaps, initial_report, trajectory_cost,
)
from Certmpc.iterations.reports import IterationReport, RunArtifacts, performance_summary, record_iteration
from Certmpc.ocp.rollout import check_inputs, simulate
from Certmpc.ocp.solver import FALLBACK, OcpProblem, PointTerminal, SolverConfig, WarmStart, constraint_residuals, fallback, solve
from .safe_set import SampledSafeSet

logger = logging.getLogger(__name__)

BASELINE = 'baseline'


@dataclass(frozen=True, eq=False)
class BaselineStep:
    solution: object
    candidate: int
    attempted: int
    solved: int


def candidate_problem(task, safe_set, index, state, time, config):
    terminal = PointTerminal(safe_set.states[index], safe_set.cost_to_go[index])
    return OcpProblem(task, terminal, state, time=time, config=config)


def baseline_solve(state, safe_set, task, warm_inputs, candidates=10, terminal_tol=1e-4, config=None, time=0):
    """
    Cheapest candidate solution at ``state``.

    ``candidates`` is the number of nearest stored states tried (0 tries
    every stored state). When no candidate problem is solved the warm start
    is returned as a fallback, checked against the nearest candidate.
    """
    config = replace(config or SolverConfig(), constraint_tol=terminal_tol)
    started = clock.perf_counter()
    warm = WarmStart(check_inputs(task, warm_inputs, task.horizon))
    predicted = simulate(task, state, warm.inputs)[-1]
    indices = safe_set.nearest(predicted, candidates)

    best, best_index, solved, iterations = None, None, 0, 0
    for index in indices:
        problem = candidate_problem(task, safe_set, index, state, time, config)
        try:
            solution = solve(problem, warm)
        except SolverFailureError as exc:
            logger.debug('Candidate %d skipped: %s', index, exc.message)
            continue
        iterations += solution.iterations
        if solution.status == FALLBACK:
            continue
        solved += 1
        if best is None or solution.objective < best.objective:
            best, best_index = solution, int(index)

    if best is None:
        best_index = int(indices[0])
        problem = candidate_problem(task, safe_set, best_index, state, time, config)
        best = fallback(problem, warm.inputs, started, iterations, 0, constraint_residuals(problem, warm.inputs))
    wall_ms = (clock.perf_counter() - started) * 1000.0
    best = replace(best, iterations=iterations, wall_time_ms=wall_ms)
    logger.debug('t=%d: %d/%d candidates solved, objective %.6f, %.1f ms',
                 time, solved, len(indices), best.objective, wall_ms)
    return BaselineStep(best, best_index, len(indices), solved)


def recorded_warm_start(trajectory, horizon, input_dim):
    """First ``horizon`` recorded inputs, padded with zeros that hold the car at its final state."""
    inputs = np.zeros((horizon, input_dim))
    count = min(horizon, len(trajectory.inputs))
    inputs[:count] = trajectory.inputs[:count]
    return inputs


class BaselineController:
    """
    Receding-horizon controller of the baseline.

    The first warm start replays the latest stored trajectory; afterwards
    the previous solution is shifted and the stored input leading out of its
    terminal state is appended, so the shifted sequence ends on a stored
    state again.
    """

    def __init__(self, task, safe_set, solver_config, candidates, terminal_tol, trajectory):
        self.task = task
        self.safe_set = safe_set
        self.solver_config = solver_config
        self.candidates = candidates
        self.terminal_tol = terminal_tol
        self.warm_inputs = recorded_warm_start(trajectory, task.horizon, task.input_dim)

    def __call__(self, state, t):
        step = baseline_solve(state, self.safe_set, self.task, self.warm_inputs, self.candidates,
                              self.terminal_tol, self.solver_config, time=t)
        solution = step.solution
        tail = self.safe_set.successor_inputs[step.candidate]
        self.warm_inputs = np.vstack([solution.inputs[1:], tail])
        return solution.first_input.copy(), solution, {'delta1_terminal': None, 'stability_flag': None}


def baseline_run(config, initial_data=None, artifacts=None):
    """
    Every iteration of the baseline from the same initial data as the
    proposed method; reports share the proposed method's schema.
    """
    task = config.task
    data = initial_data if initial_data is not None else initial_dataset(
        task, config.behind_offsets, config.initial_trajectory)
    if artifacts is None and config.output_dir is not None:
        artifacts = RunArtifacts(config.output_dir)
    label = config.label or (str(config.output_dir) if config.output_dir is not None else 'run')

    safe_set = SampledSafeSet.from_dataset(data, task.input_dim)
    reports = [initial_report(task, data, method=BASELINE)]
    if artifacts is not None:
        artifacts.write_dataset(data)
        artifacts.write_summary(reports)
    if config.ledger:
        record_iteration(label, reports[0])

    plant = substep_plant(task, config.plant_substeps)
    for iteration in range(1, config.iterations + 1):
        controller = BaselineController(task, safe_set, config.solver, config.baseline_candidates,
                                        config.baseline_terminal_tol, data.executed()[-1])
        outcome = execute_closed_loop(task, controller, plant, config.wheels, iteration, method=BASELINE)
        fill_lyapunov_gaps(task, outcome.steps, config.solver.normalize_discount)
        data = data.updated(outcome.trajectory)
        safe_set = safe_set.updated(outcome.trajectory)

        cost = trajectory_cost(task, outcome.trajectory)
        previous_cost = reports[-1].cost.value
        report = IterationReport(
            iteration=iteration,
            method=BASELINE,
            cost=cost,
            trajectory=outcome.trajectory,
            steps=outcome.steps,
            goal_error=outcome.goal_error,
            trend_slack=0.0,
            trend_ok=cost_trend_ok(task, iteration, BASELINE, cost, previous_cost, 1e-9, outcome.goal_error),
        )
        reports.append(report)
        logger.info('Baseline iteration %d: cost %.4f (undiscounted %.4f), %d steps, mean solve %.1f ms',
                    iteration, cost.value, cost.undiscounted, cost.steps, report.mean_solve_ms or 0.0)
        if artifacts is not None:
            artifacts.write_dataset(data)
            artifacts.write_steps(report)
            artifacts.write_summary(reports)
        if config.ledger:
            record_iteration(label, report)

    if artifacts is not None:
        table = performance_summary(reports)
        artifacts.write_performance(table)
        logger.info('Baseline performance summary\n%s', table.text())
    return RunResult(reports, data, None, None)
