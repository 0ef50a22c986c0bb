"""Files written for a simulated run and text reports of its results."""
import logging
import os

import numpy as np
import pandas as pd

from dhtsmc.core.data_logging import trace_to_dataframe, write_csv
from dhtsmc.core.exception import InvalidParamsError, OutputError
from dhtsmc.core.kinematics import rotation_to_euler_zyx
from dhtsmc.core.simulation import cartesian_errors

# Module logger
log = logging.getLogger(__name__)


def format_stability_report(report):
    lines = ['Stability check of the reaching gains',
             f'  alpha: {np.array2string(report.alpha, precision=6)}',
             f'  ddq range: [{report.ddq_range[0]:g}, {report.ddq_range[1]:g}] '
             f'rad/s2']
    for j, bound in enumerate(report.bounds):
        worst = np.array2string(report.worst_gain[j], precision=6,
                                max_line_width=200)
        lines.append(f'  tap {j}: bound {bound:.6f} 1/s, worst gain {worst}')
    lines.append(f'  compliant: {report.compliant}')
    for tap, joint in report.violations:
        lines.append(f'  violation: tap {tap} joint {joint + 1} gain '
                     f'{report.worst_gain[tap, joint]:g} > bound '
                     f'{report.bounds[tap]:.6f}')
    if report.admissible_alpha is None:
        lines.append('  no admissible alpha makes these gains comply')
    elif not report.compliant:
        lines.append(f'  compliant with alpha '
                     f'{np.array2string(report.admissible_alpha, precision=6)}')
    if report.gamma is not None:
        lines.append(f'  E bound (assumed): '
                     f'{np.array2string(report.E_bound, precision=6)}')
        for j, (g, ok) in enumerate(zip(report.gamma, report.guaranteed)):
            region = f'{g:.6g}' if ok else 'not guaranteed'
            lines.append(f'  joint {j + 1}: bound on s^2 {region}')
    return '\n'.join(lines) + '\n'


def format_metrics(metrics, title='Metrics'):
    lines = [title]
    for j in range(len(metrics.max_error)):
        lines.append(f'  joint {j + 1}: max {metrics.max_error[j]:.6e} rad, '
                     f'rms {metrics.rms_error[j]:.6e} rad, '
                     f'offset {metrics.steady_state_offset[j]:.6e} rad, '
                     f'chattering {metrics.chattering[j]:.6e} N m')
    lines.append(f'  max position error: '
                 f'{1e3 * metrics.max_position_error:.6f} mm')
    lines.append('  max Euler error (yaw, pitch, roll): ' + ', '.join(
        f'{np.rad2deg(v):.6f}' for v in metrics.max_euler_error) + ' deg')
    return '\n'.join(lines) + '\n'


def _makedirs(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise OutputError(f'cannot create output directory {path}: {e}')


def _write(func, path):
    try:
        func(path)
    except OSError as e:
        raise OutputError(f'cannot write {path}: {e}')


def emit_outputs(trace, metrics, out_dir, stability=None, model=None):
    """Write trace.csv, metrics.csv, error series and summary.txt."""
    if trace is None or trace.sizes.get('t', 0) == 0:
        raise InvalidParamsError('non-empty trace required')
    _makedirs(out_dir)

    _write(lambda p: write_csv(trace_to_dataframe(trace), p),
           os.path.join(out_dir, 'trace.csv'))

    values = metrics.to_dict()
    df = pd.DataFrame({'metric': list(values), 'value': list(values.values())})
    _write(lambda p: write_csv(df, p), os.path.join(out_dir, 'metrics.csv'))

    errors = trace['q'].values - trace['r'].values
    df = pd.DataFrame({'t': trace['t'].values})
    for j in range(errors.shape[1]):
        df[f'e_{j + 1}'] = errors[:, j]
    _write(lambda p: write_csv(df, p), os.path.join(out_dir,
                                                     'joint_errors.csv'))

    if model is not None:
        pos_err, eul_err = cartesian_errors(trace, model)
        df = pd.DataFrame({'t': trace['t'].values})
        for i, axis in enumerate('xyz'):
            df[f'e{axis}_mm'] = 1e3 * pos_err[:, i]
        for i, axis in enumerate(('yaw', 'pitch', 'roll')):
            df[f'e_{axis}_deg'] = np.rad2deg(eul_err[:, i])
        _write(lambda p: write_csv(df, p),
               os.path.join(out_dir, 'cartesian_errors.csv'))

    text = f"Run {trace.attrs.get('scenario', '')} with " \
           f"{trace.attrs.get('controller', '')} (seed " \
           f"{trace.attrs.get('seed', '')})\n"
    text += format_metrics(metrics)
    if stability is not None:
        text += format_stability_report(stability)

    def write_text(p):
        with open(p, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)

    _write(write_text, os.path.join(out_dir, 'summary.txt'))
    log.info('outputs written to %s', out_dir)


def comparison_table(metrics_by_controller):
    """Metrics side by side, one column per controller."""
    names = list(metrics_by_controller)
    rows = {name: m.to_dict() for name, m in metrics_by_controller.items()}
    df = pd.DataFrame({'metric': list(rows[names[0]])})
    for name in names:
        df[name] = [rows[name][k] for k in df['metric']]
    if len(names) == 2:
        a, b = names
        with np.errstate(divide='ignore', invalid='ignore'):
            df[f'{a}/{b}'] = df[a] / df[b]
    return df


def write_comparison(metrics_by_controller, out_dir):
    _makedirs(out_dir)
    df = comparison_table(metrics_by_controller)
    _write(lambda p: write_csv(df, p), os.path.join(out_dir,
                                                     'comparison.csv'))
    return df


def write_reference(traj, out_dir):
    """Planned reference: tool pose and joint references per sample."""
    _makedirs(out_dir)
    df = pd.DataFrame({'t': traj.t})
    for i, axis in enumerate('xyz'):
        df[axis] = traj.positions[:, i]
    euler = np.array([rotation_to_euler_zyx(r, strict=False).as_array()
                      for r in traj.rotations])
    for i, axis in enumerate(('yaw', 'pitch', 'roll')):
        df[axis] = euler[:, i]
    for j in range(traj.q_ref.shape[1]):
        df[f'q_ref_{j + 1}'] = traj.q_ref[:, j]
    for j in range(traj.q_ref.shape[1]):
        df[f'dq_ref_{j + 1}'] = traj.dq_ref[:, j]
    path = os.path.join(out_dir, 'reference.csv')
    _write(lambda p: write_csv(df, p), path)
    return path
