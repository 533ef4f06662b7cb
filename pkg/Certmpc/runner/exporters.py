"""
Figure-data and diagnostics export.

CSV floats are written with ``repr`` so reading a file back yields the
exact values that were written.
"""
import csv
import logging
from pathlib import Path

import numpy as np

from Certmpc.certificates.regions import construct_regions
from Certmpc.certificates.trainer import (
    condition_report, estimate_violation_bounds, uniform_states,
)

logger = logging.getLogger(__name__)

HEATMAP_HEADER = ['z', 'y', 'value', 'below_level']


def format_value(value):
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
    return path


def read_csv(path):
    with open(path, newline='') as handle:
        return list(csv.DictReader(handle))


def parse_value(text):
    """Inverse of ``format_value`` for numeric, boolean and empty cells."""
    if text == '':
        return None
    if text in ('True', 'False'):
        return text == 'True'
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def heatmap_rows(cert, task, theta, resolution):
    """(z, y, V(z, y, theta), V <= c) over a uniform grid of the domain's (z, y) box."""
    zs = np.linspace(task.domain_lower[0], task.domain_upper[0], resolution)
    ys = np.linspace(task.domain_lower[1], task.domain_upper[1], resolution)
    grid_z, grid_y = np.meshgrid(zs, ys, indexing='ij')
    states = np.column_stack([grid_z.ravel(), grid_y.ravel(), np.full(grid_z.size, float(theta))])
    values = cert.values(states)
    below = values <= cert.level
    return [(float(z), float(y), float(v), bool(flag))
            for z, y, v, flag in zip(states[:, 0], states[:, 1], values, below)]


def certified_fraction(rows):
    return sum(1 for row in rows if row[3]) / len(rows) if rows else 0.0


def gnuplot_script(csv_name, level, theta):
    return '\n'.join([
        "set datafile separator ','",
        f"set title 'V(z, y, theta = {theta:.4f}) with level {level:g}'",
        "set xlabel 'z [m]'",
        "set ylabel 'y [m]'",
        'set size ratio -1',
        'set key off',
        f"plot '{csv_name}' every ::1 using 1:2:3 with image, \\",
        f"     '{csv_name}' every ::1 using 1:(strcol(4) eq 'True' ? $2 : 1/0) with points pt 7 ps 0.3 lc rgb 'white'",
        '',
    ])


def write_heatmap(path, cert, task, theta, resolution, script=True):
    """Write the heatmap CSV (and a gnuplot script next to it); returns the certified grid fraction."""
    path = Path(path)
    rows = heatmap_rows(cert, task, theta, resolution)
    write_csv(path, HEATMAP_HEADER, rows)
    if script:
        path.with_suffix('.gp').write_text(gnuplot_script(path.name, cert.level, theta))
    fraction = certified_fraction(rows)
    logger.info('Heatmap %s: %.1f%% of the grid certified', path.name, 100 * fraction)
    return fraction


def heatmap_name(iteration, theta):
    return f'heatmap_{iteration}_theta{theta:.4f}.csv'


def verify_certificate(cert, policy, task, data, n_test, seed, regions=None, counts=(2000, 2000)):
    """Per-condition violation report on fresh uniform samples, with delta estimates."""
    if regions is None:
        regions = construct_regions(data, task, counts=counts, rng=np.random.default_rng(seed))
    transitions = data.transitions(task.state_dim, task.input_dim)
    report, _, _ = condition_report(cert, policy, task, regions, uniform_states(task, n_test, seed), transitions)
    bounds = estimate_violation_bounds(cert, policy, data, task, n_test, seed + 1)
    payload = report.as_dict()
    payload.update({
        'delta1_max': bounds.delta1,
        'delta2': bounds.delta2,
        'delta1_samples': bounds.delta1_samples,
        'delta2_samples': bounds.delta2_samples,
        'seed': seed,
    })
    return payload
