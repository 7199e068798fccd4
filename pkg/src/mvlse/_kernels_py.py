"""Pure-Python (numpy) versions of the compiled kernels.

Selected by :mod:`mvlse.kernels` when the extension is not built or when
``MVLSE_PURE_PYTHON=1``. The loop structure mirrors ``_kernels.pyx``.
"""
import numpy as np


def _own(code, col):
    if code == 1:
        return np.sin(col)
    return np.zeros_like(col)


def _other(code, col):
    if code == 1:
        return np.cos(col)
    if code == 2:
        return col
    return np.zeros_like(col)


def em_example(hist, theta1, theta2, eps, delta, dB, b0_code):
    """Euler-Maruyama for the scalar example model, all particles in lockstep.

    Parameters
    ----------
    hist : (M+1,) array
        Initial datum on the grid.
    dB : (N, n) array
        Brownian increments (already scaled by ``sqrt(delta)``).
    b0_code : int
        0 zero, 1 sincos, 2 state.

    Returns
    -------
    (N, M+1+n) array of knot values.
    """
    hist = np.asarray(hist, dtype=float)
    dB = np.asarray(dB, dtype=float)
    N, n = dB.shape
    M = hist.shape[0] - 1
    paths = np.empty((N, M + 1 + n))
    paths[:, : M + 1] = hist
    for k in range(n):
        cur = paths[:, k + M]
        mean_other = np.sum(_other(b0_code, cur)) / N
        drift = theta1 + theta2 * (_own(b0_code, paths[:, k]) + mean_other)
        paths[:, k + M + 1] = cur + drift * delta + eps * (1.0 + np.abs(cur)) * dB[:, k]
    return paths
