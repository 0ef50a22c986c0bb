import numpy as np
from scipy import signal


def RMSE(a1, a2, axis=0):
    dev = np.asarray(a1) - np.asarray(a2)
    return np.sqrt((dev**2).mean(axis=axis))


def high_pass_peak_to_peak(x, fs, cutoff=50., order=2):
    """Peak-to-peak of ``x`` after a zero-phase Butterworth high-pass.

    Columns are filtered independently. Series too short for the filter
    padding fall back to the peak-to-peak of the de-meaned signal.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 2:
        return np.zeros(x.shape[1])
    sos = signal.butter(order, cutoff, btype='highpass', fs=fs, output='sos')
    padlen = 3 * (2 * len(sos) + 1)
    if len(x) <= padlen:
        filtered = x - x.mean(axis=0)
    else:
        filtered = signal.sosfiltfilt(sos, x, axis=0)
    return np.ptp(filtered, axis=0)
