"""
Per-step and per-iteration records, run artifacts and the performance table.

Run directory layout::

    dataset.jsonl                 every trajectory collected so far
    cert_<j>.params               certificate fitted after iteration j
    policy_<j>.params             policy fitted after iteration j
    alpha_<j>.csv                 boundary of the safe sampling region
    heatmap_<j>_theta<val>.csv    certificate grid (+ .gp gnuplot script)
    iteration_<j>.csv             per-step log of iteration j
    summary.csv                   one row per iteration (no timings)
    timings.csv                   online solve times per iteration
    performance.csv               cost / solve time table
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.db import DatabaseError

from Certmpc.certificates.alpha_shape import write_polygon_csv
from Certmpc.neural.utils import save_params
from Certmpc.runner.exporters import heatmap_name, read_csv, parse_value, write_csv, write_heatmap
from .models import IterationRecord

logger = logging.getLogger(__name__)

STEP_HEADER = [
    't', 'z', 'y', 'theta', 'v', 'omega', 'v_r', 'v_l', 'status', 'objective', 'obstacle_residual',
    'terminal_residual', 'iterations', 'wall_time_ms', 'lyapunov_gap', 'delta1_terminal', 'stability_flag',
]
SUMMARY_HEADER = [
    'iteration', 'method', 'cost', 'undiscounted_cost', 'tail_bound', 'steps', 'goal_error', 'delta1_max',
    'delta2', 'containment_fraction', 'violation_rate', 'trend_slack', 'trend_ok', 'fallbacks',
]
TIMING_HEADER = ['iteration', 'method', 'mean_solve_ms', 'max_solve_ms', 'total_solve_ms']


@dataclass(eq=False)
class StepRecord:
    t: int
    state: np.ndarray
    applied: np.ndarray
    status: str
    objective: float
    residuals: dict
    iterations: int
    wall_time_ms: float
    wheels: tuple
    lyapunov_gap: float = None
    delta1_terminal: float = None
    stability_flag: bool = None

    def row(self):
        return [
            self.t, *map(float, self.state), *map(float, self.applied), float(self.wheels[0]),
            float(self.wheels[1]), self.status, self.objective, self.residuals.get('obstacle'),
            self.residuals.get('terminal'), self.iterations, self.wall_time_ms, self.lyapunov_gap,
            self.delta1_terminal, self.stability_flag,
        ]


@dataclass(eq=False)
class IterationReport:
    iteration: int
    method: str
    cost: object
    trajectory: object
    steps: list = field(default_factory=list)
    goal_error: float = None
    delta1_max: float = None
    delta2: float = None
    containment_fraction: float = None
    violation_rate: float = None
    trend_slack: float = None
    trend_ok: bool = None

    @property
    def solve_times(self):
        return [step.wall_time_ms for step in self.steps]

    @property
    def mean_solve_ms(self):
        return float(np.mean(self.solve_times)) if self.steps else None

    @property
    def max_solve_ms(self):
        return float(np.max(self.solve_times)) if self.steps else None

    @property
    def total_solve_ms(self):
        return float(np.sum(self.solve_times)) if self.steps else None

    @property
    def fallbacks(self):
        return sum(1 for step in self.steps if step.status == 'infeasible_fallback')

    def summary_row(self):
        return [
            self.iteration, self.method, self.cost.value, self.cost.undiscounted, self.cost.tail_bound,
            self.cost.steps, self.goal_error, self.delta1_max, self.delta2, self.containment_fraction,
            self.violation_rate, self.trend_slack, self.trend_ok, self.fallbacks,
        ]

    def timing_row(self):
        return [self.iteration, self.method, self.mean_solve_ms, self.max_solve_ms, self.total_solve_ms]

    def table_entry(self):
        return {
            'iteration': self.iteration,
            'cost': self.cost.value,
            'undiscounted_cost': self.cost.undiscounted,
            'mean_solve_ms': self.mean_solve_ms,
            'total_solve_ms': self.total_solve_ms,
        }


@dataclass(frozen=True)
class PerformanceTable:
    header: list
    rows: list

    def text(self):
        cells = [[str(column) for column in self.header]]
        for row in self.rows:
            cells.append(['--' if value is None else (f'{value:.4f}' if isinstance(value, float) else str(value))
                          for value in row])
        widths = [max(len(line[index]) for line in cells) for index in range(len(self.header))]
        lines = ['  '.join(cell.rjust(width) for cell, width in zip(line, widths)) for line in cells]
        lines.insert(1, '  '.join('-' * width for width in widths))
        return '\n'.join(lines)


def _entry(item):
    return item.table_entry() if hasattr(item, 'table_entry') else item


def _seconds(milliseconds):
    return None if milliseconds is None else milliseconds / 1000.0


def performance_summary(reports, baseline_reports=None):
    """
    Cost and online solve time per iteration; iteration 0 (the initial
    trajectory) has no solve times.
    """
    header = ['iteration', 'cost', 'undiscounted_cost', 'mean_solve_ms', 'total_solve_s']
    baseline = {}
    if baseline_reports:
        header += ['baseline_cost', 'baseline_undiscounted_cost', 'baseline_mean_solve_ms', 'baseline_total_solve_s']
        baseline = {int(_entry(item)['iteration']): _entry(item) for item in baseline_reports}
    rows = []
    for item in reports:
        entry = _entry(item)
        row = [int(entry['iteration']), entry['cost'], entry['undiscounted_cost'], entry['mean_solve_ms'],
               _seconds(entry['total_solve_ms'])]
        if baseline_reports:
            other = baseline.get(int(entry['iteration']))
            row += ([other['cost'], other['undiscounted_cost'], other['mean_solve_ms'],
                     _seconds(other['total_solve_ms'])] if other else [None] * 4)
        rows.append(row)
    return PerformanceTable(header, rows)


def load_table_entries(directory):
    """Table entries rebuilt from a run directory's summary.csv and timings.csv."""
    directory = Path(directory)
    summary = read_csv(directory / 'summary.csv')
    timings_path = directory / 'timings.csv'
    timings = {row['iteration']: row for row in read_csv(timings_path)} if timings_path.exists() else {}
    entries = []
    for row in summary:
        timing = timings.get(row['iteration'], {})
        entries.append({
            'iteration': parse_value(row['iteration']),
            'cost': parse_value(row['cost']),
            'undiscounted_cost': parse_value(row['undiscounted_cost']),
            'mean_solve_ms': parse_value(timing.get('mean_solve_ms', '')),
            'total_solve_ms': parse_value(timing.get('total_solve_ms', '')),
        })
    return entries


class RunArtifacts:
    """Writes every file of one run directory."""

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name):
        return self.output_dir / name

    def write_dataset(self, data):
        return data.write_jsonl(self.path('dataset.jsonl'))

    def write_networks(self, iteration, cert, policy):
        save_params(self.path(f'cert_{iteration}.params'), cert)
        save_params(self.path(f'policy_{iteration}.params'), policy)

    def write_region(self, iteration, regions):
        if regions is not None and regions.shape is not None:
            write_polygon_csv(self.path(f'alpha_{iteration}.csv'), regions.shape)

    def write_heatmap(self, iteration, cert, task, theta, resolution):
        return write_heatmap(self.path(heatmap_name(iteration, theta)), cert, task, theta, resolution)

    def write_steps(self, report):
        return write_csv(self.path(f'iteration_{report.iteration}.csv'), STEP_HEADER,
                         [step.row() for step in report.steps])

    def write_summary(self, reports):
        write_csv(self.path('summary.csv'), SUMMARY_HEADER, [report.summary_row() for report in reports])
        write_csv(self.path('timings.csv'), TIMING_HEADER, [report.timing_row() for report in reports])

    def write_performance(self, table):
        return write_csv(self.path('performance.csv'), table.header, table.rows)


def record_iteration(label, report):
    """Upsert the ledger entry; database problems are logged and never interrupt a run."""
    try:
        IterationRecord.objects.update_or_create(
            run_label=label,
            method=report.method,
            iteration=report.iteration,
            defaults={
                'cost': report.cost.value,
                'undiscounted_cost': report.cost.undiscounted,
                'tail_bound': report.cost.tail_bound,
                'steps': report.cost.steps,
                'mean_solve_ms': report.mean_solve_ms,
                'total_solve_ms': report.total_solve_ms,
                'delta1_max': report.delta1_max,
                'delta2': report.delta2,
                'containment_fraction': report.containment_fraction,
                'violation_rate': report.violation_rate,
                'goal_error': report.goal_error,
                'trend_ok': report.trend_ok,
            },
        )
    except DatabaseError as exc:
        logger.warning('Could not record iteration %d in the ledger: %s', report.iteration, exc)
