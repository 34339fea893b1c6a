"""Compiled stepping loops for the order-n Winfree system.

Summation over oscillators is a plain left-to-right loop so that a given
input always produces the same bits regardless of how many simulations run
side by side.
"""
import math

import numba
import numpy as np

EULER = 0
RK4 = 1


@numba.njit(cache=True)
def _velocity(theta, freqs, kappa, n, log_peak, out):
    N = theta.shape[0]
    total = 0.0
    for j in range(N):
        c = abs(math.cos(0.5 * theta[j]))
        if c > 0.0:
            total += math.exp(log_peak + 2.0 * n * math.log(c))
    mean_influence = total / N
    for i in range(N):
        out[i] = freqs[i] - kappa * mean_influence * math.sin(theta[i])


@numba.njit(cache=True)
def run(theta0, freqs, kappa, n, log_peak, dt, n_steps, stride, method):
    """Integrate and record every ``stride`` steps.

    Returns (record, steps_done); ``steps_done < n_steps`` means a non-finite
    phase appeared after that many steps and ``record`` holds only the rows
    written before it.
    """
    N = theta0.shape[0]
    n_rec = n_steps // stride + 1
    record = np.empty((n_rec, N))
    theta = theta0.copy()
    k1 = np.empty(N)
    k2 = np.empty(N)
    k3 = np.empty(N)
    k4 = np.empty(N)
    tmp = np.empty(N)
    record[0, :] = theta
    row = 1
    for step in range(1, n_steps + 1):
        _velocity(theta, freqs, kappa, n, log_peak, k1)
        if method == EULER:
            for i in range(N):
                theta[i] = theta[i] + dt * k1[i]
        else:
            for i in range(N):
                tmp[i] = theta[i] + 0.5 * dt * k1[i]
            _velocity(tmp, freqs, kappa, n, log_peak, k2)
            for i in range(N):
                tmp[i] = theta[i] + 0.5 * dt * k2[i]
            _velocity(tmp, freqs, kappa, n, log_peak, k3)
            for i in range(N):
                tmp[i] = theta[i] + dt * k3[i]
            _velocity(tmp, freqs, kappa, n, log_peak, k4)
            for i in range(N):
                theta[i] = theta[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(N):
            if not math.isfinite(theta[i]):
                return record[:row], step - 1
        if step % stride == 0:
            record[row, :] = theta
            row += 1
    return record, n_steps
