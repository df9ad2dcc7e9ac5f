"""NumPy implementations of the edge-sweep kernels (fallback backend)."""

import numpy as np
from scipy.special import expit


def _prior_log_odds(alpha, beta, p):
    if p <= 0:
        return -np.inf
    return np.log(p) - np.log(beta) - np.log1p(-p) + np.log(alpha)


def posterior_into(r, alpha, beta, p, out):
    curv = 0.5 * (1.0 / alpha**2 - 1.0 / beta**2)
    out[:] = expit(_prior_log_odds(alpha, beta, p) + curv * np.square(r))


def dist_em_step(tails, heads, b, x, pi, alpha, beta, p, tau, x_out, pi_out, grad):
    n = x.shape[0]
    w = (1.0 - pi) / alpha**2 + pi / beta**2
    g = w * (x[heads] - x[tails] - b)
    grad[:] = np.bincount(heads, g, n) - np.bincount(tails, g, n)
    x_out[:] = x - tau * grad
    posterior_into(b - (x_out[heads] - x_out[tails]), alpha, beta, p, pi_out)
    return float(np.linalg.norm(x_out - x))


def lae_subgrad_step(tails, heads, b, x, tau, x_out):
    n = x.shape[0]
    r = b - (x[heads] - x[tails])
    s = tau * np.sign(r)
    x_out[:] = x + np.bincount(heads, s, n) - np.bincount(tails, s, n)
    return float(np.abs(r).sum())
