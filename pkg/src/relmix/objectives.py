"""Mixture likelihood, posterior responsibilities and the EM objectives.

All logarithms are natural. ``pi`` (or ``xi``) is the per-edge probability
that a measurement came from the wide (``beta``) component.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

__all__ = [
    "posterior",
    "posterior_log_odds",
    "entropy",
    "edge_weights",
    "objective_v",
    "objective_v_tilde",
    "log_likelihood",
    "project_smallest",
    "TIE_DECIMALS",
]

LOG_2PI = math.log(2.0 * math.pi)

# posteriors equal to this many decimals are ranked as ties by project_smallest
TIE_DECIMALS = 12


def _check_scales(alpha, beta):
    if not (np.all(np.asarray(alpha) > 0) and np.all(np.asarray(beta) > 0)):
        raise ValueError(f"alpha and beta must be positive, got {alpha}, {beta}")


def posterior_log_odds(residual, alpha, beta, p):
    """Log-odds that each residual was drawn from the ``beta`` component."""
    r2 = np.square(np.asarray(residual, dtype=float))
    with np.errstate(divide="ignore"):
        prior = np.log(p) - np.log(beta) - np.log1p(-p) + np.log(alpha)
    return prior + 0.5 * r2 * (1.0 / alpha**2 - 1.0 / beta**2)


def posterior(residual, alpha, beta, p):
    """Responsibility of the wide component for a residual ``b_e - (Ax)_e``.

    Evaluated as a logistic of the log-odds, so tiny ``alpha`` or huge
    residuals saturate to 0 or 1 instead of producing ``nan``.
    """
    _check_scales(alpha, beta)
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    out = expit(posterior_log_odds(residual, alpha, beta, p))
    return float(out) if np.ndim(out) == 0 else out


def entropy(xi):
    """Binary entropy in nats, with ``H(0) = H(1) = 0``."""
    x = np.asarray(xi, dtype=float)
    if np.any(x < 0) or np.any(x > 1) or np.any(np.isnan(x)):
        raise ValueError("entropy is defined on [0, 1] only")
    inner = (x > 0) & (x < 1)
    xs = np.where(inner, x, 0.5)
    h = np.where(inner, -xs * np.log(xs) - (1 - xs) * np.log1p(-xs), 0.0)
    return float(h) if h.ndim == 0 else h


def edge_weights(pi, alpha, beta) -> np.ndarray:
    """Per-edge inverse variances ``(1 - pi)/alpha^2 + pi/beta^2``."""
    pi = np.asarray(pi, dtype=float)
    return (1.0 - pi) / alpha**2 + pi / beta**2


def _residual(x, b, A):
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    A = np.asarray(A, dtype=float)
    if A.shape != (b.shape[0], x.shape[0]):
        raise ValueError(f"A has shape {A.shape}; expected ({b.shape[0]}, {x.shape[0]})")
    return b - A @ x


def _label_terms(pi, alpha, beta, p):
    with np.errstate(divide="ignore", invalid="ignore"):
        log_bad = math.log(p / beta) if p > 0 else -math.inf
        log_good = math.log((1 - p) / alpha)
        bad = np.where(pi > 0, -pi * log_bad, 0.0)
    return np.sum(bad - (1.0 - pi) * log_good - entropy(pi))


def objective_v(x, pi, alpha, beta, b, A, p) -> float:
    """Quadratic-plus-entropy upper bound whose minimum over ``pi`` is ``-L``."""
    _check_scales(alpha, beta)
    r = _residual(x, b, A)
    pi = np.asarray(pi, dtype=float)
    if pi.shape != r.shape:
        raise ValueError(f"pi has shape {pi.shape}; expected {r.shape}")
    quad = 0.5 * np.sum(r * r * edge_weights(pi, alpha, beta))
    return float(quad + _label_terms(pi, alpha, beta, p))


def objective_v_tilde(x, pi, alpha, beta, epsilon, b, A, p) -> float:
    """``objective_v`` with every squared residual inflated by ``epsilon/|E|``."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    _check_scales(alpha, beta)
    r = _residual(x, b, A)
    pi = np.asarray(pi, dtype=float)
    if pi.shape != r.shape:
        raise ValueError(f"pi has shape {pi.shape}; expected {r.shape}")
    m = r.shape[0]
    quad = 0.5 * np.sum((r * r + epsilon / m) * edge_weights(pi, alpha, beta))
    return float(quad + _label_terms(pi, alpha, beta, p))


def log_likelihood(x, alpha, beta, b, A, p) -> float:
    """Log-density of ``b`` under the mixture model, summed over edges."""
    _check_scales(alpha, beta)
    r2 = np.square(_residual(x, b, A))
    with np.errstate(divide="ignore"):
        good = math.log1p(-p) - math.log(alpha) - 0.5 * r2 / alpha**2
        bad = (math.log(p) if p > 0 else -math.inf) - math.log(beta) - 0.5 * r2 / beta**2
    return float(np.sum(np.logaddexp(good, bad)) - 0.5 * r2.shape[0] * LOG_2PI)


def project_smallest(xi, s: int) -> np.ndarray:
    """Zero the ``s`` smallest entries of ``xi``.

    Ties (equal to ``TIE_DECIMALS`` decimals) are broken by edge index: the
    lower index is zeroed first.
    """
    xi = np.asarray(xi, dtype=float)
    if not 0 <= s <= xi.shape[0]:
        raise ValueError(f"s must lie in [0, {xi.shape[0]}], got {s}")
    out = xi.copy()
    if s:
        order = np.argsort(np.round(xi, TIE_DECIMALS), kind="stable")
        out[order[:s]] = 0.0
    return out
