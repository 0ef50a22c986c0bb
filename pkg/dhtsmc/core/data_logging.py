import logging

import numpy as np
import pandas as pd
import xarray as xr

# Module logger
log = logging.getLogger(__name__)

# variables of the trace, all with dims (t, joint)
TRACE_VARIABLES = ['r', 'dr', 'q', 'dq', 'ddq', 'tau', 's', 's_target',
                   'hhat', 'h', 'd']

# column groups of trace.csv in their fixed order
CSV_GROUPS = ['r', 'q', 'dq', 'tau', 's', 'hhat', 'd']

TRACE_DOCS = {'r': 'joint reference r_k (rad)',
              'dr': 'joint reference velocity (rad/s)',
              'q': 'measured joint angle q_k (rad)',
              'dq': 'measured joint velocity (rad/s)',
              'ddq': 'mean joint acceleration over the tick (rad/s2)',
              'tau': 'commanded torque, held over the tick (N m)',
              's': 'sliding variable s_k (rad/s)',
              's_target': 'demanded s_(k+1) of the reaching law (rad/s)',
              'hhat': 'time-delay estimate of the lumped uncertainty (N m)',
              'h': 'lumped uncertainty realised over the tick (N m)',
              'd': 'external disturbance at the start of the tick (N m)'}


class TraceLogger(object):
    """Collects per tick values of one closed-loop run."""

    def __init__(self, n_joints, n_ticks, T, attrs=None):
        self.n_joints = n_joints
        self.n_ticks = n_ticks
        self.T = T
        self.attrs = dict(attrs or {})
        self.t = np.arange(n_ticks) * T
        self.data = {var: np.full((n_ticks, n_joints), np.nan)
                     for var in TRACE_VARIABLES}
        self.ticks_recorded = 0

    def record(self, k, **values):
        for var, val in values.items():
            self.data[var][k] = val
        self.ticks_recorded = max(self.ticks_recorded, k + 1)

    def to_dataset(self):
        if self.ticks_recorded < self.n_ticks:
            log.warning('trace ends after %d of %d ticks', self.ticks_recorded,
                        self.n_ticks)
        n = self.ticks_recorded
        ds = xr.Dataset(
            {var: (('t', 'joint'), self.data[var][:n],
                   {'description': TRACE_DOCS[var]})
             for var in TRACE_VARIABLES},
            coords={'t': self.t[:n],
                    'joint': np.arange(1, self.n_joints + 1)})
        ds.attrs = {'T': self.T, **self.attrs}
        return ds


def trace_to_dataframe(trace):
    """Flat table of the trace with the fixed trace.csv column order."""
    columns = {'t': trace['t'].values}
    joints = trace['joint'].values
    for var in CSV_GROUPS:
        for j, joint in enumerate(joints):
            columns[f'{var}_{joint}'] = trace[var].values[:, j]
    return pd.DataFrame(columns)


def dataframe_to_trace(df, attrs=None):
    """Inverse of trace_to_dataframe for the trace.csv variables."""
    n = len([c for c in df.columns if c.startswith('r_')])
    data = {var: (('t', 'joint'),
                  df[[f'{var}_{j}' for j in range(1, n + 1)]].values)
            for var in CSV_GROUPS}
    return xr.Dataset(data, coords={'t': df['t'].values,
                                    'joint': np.arange(1, n + 1)},
                      attrs=dict(attrs or {}))


def write_csv(df, path):
    df.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')


def read_trace_csv(path):
    df = pd.read_csv(path, float_precision='round_trip')
    return dataframe_to_trace(df)
