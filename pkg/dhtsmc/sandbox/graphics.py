import os

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from dhtsmc.core.simulation import cartesian_errors


def plot_joint_errors(traces, ax=None):
    """Tracking error of every joint, one line per controller.

    Parameters
    ----------
    traces : dict
        controller name -> trace Dataset
    ax : array of Axes, optional
        one axis per joint
    """
    first = next(iter(traces.values()))
    n = first.sizes['joint']
    if ax is None:
        fig, ax = plt.subplots(n, 1, sharex=True, figsize=(8, 1.6 * n))
    ax = np.atleast_1d(ax)
    for name, trace in traces.items():
        e = trace['q'].values - trace['r'].values
        for j in range(n):
            ax[j].plot(trace['t'].values, e[:, j], label=name, lw=0.8)
    for j in range(n):
        ax[j].set_ylabel(f'e{j + 1} (rad)')
    ax[-1].set_xlabel('t (s)')
    ax[0].legend(loc='upper right', fontsize='small')
    return ax


def plot_cartesian_errors(trace, model, ax=None):
    """Position error in mm and ZYX Euler error in deg of the tool."""
    if ax is None:
        fig, ax = plt.subplots(2, 1, sharex=True, figsize=(8, 5))
    pos_err, eul_err = cartesian_errors(trace, model)
    t = trace['t'].values
    for i, axis in enumerate('xyz'):
        ax[0].plot(t, 1e3 * pos_err[:, i], label=axis, lw=0.8)
    for i, axis in enumerate(('yaw', 'pitch', 'roll')):
        ax[1].plot(t, np.rad2deg(eul_err[:, i]), label=axis, lw=0.8)
    ax[0].set_ylabel('position error (mm)')
    ax[1].set_ylabel('Euler error (deg)')
    ax[1].set_xlabel('t (s)')
    for a in ax:
        a.legend(loc='upper right', fontsize='small')
    return ax


def save_run_figures(traces, model, out_dir):
    """joint_errors.png for all controllers and one Cartesian plot each."""
    paths = []
    ax = plot_joint_errors(traces)
    path = os.path.join(out_dir, 'joint_errors.png')
    ax[0].figure.savefig(path, dpi=120, bbox_inches='tight')
    plt.close(ax[0].figure)
    paths.append(path)
    for name, trace in traces.items():
        ax = plot_cartesian_errors(trace, model)
        path = os.path.join(out_dir, f'cartesian_errors_{name}.png')
        ax[0].figure.savefig(path, dpi=120, bbox_inches='tight')
        plt.close(ax[0].figure)
        paths.append(path)
    return paths
