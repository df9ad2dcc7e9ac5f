# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Edge-sweep kernels for the iterative estimators.

Twin of ``_kernels_py``; both must agree to rounding. Edge ``e`` runs from
``tails[e]`` to ``heads[e]`` and its residual is
``b[e] - (x[heads[e]] - x[tails[e]])``.
"""

from libc.math cimport exp, log, fabs, sqrt, INFINITY

cimport numpy as cnp
import numpy as np

cnp.import_array()

ctypedef cnp.intp_t idx_t


cdef inline double _logistic(double z) nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _prior_log_odds(double alpha, double beta, double p) nogil:
    if p <= 0:
        return -INFINITY
    return log(p) - log(beta) - log(1.0 - p) + log(alpha)


def posterior_into(const double[::1] r, double alpha, double beta, double p,
                   double[::1] out):
    cdef Py_ssize_t e, m = r.shape[0]
    cdef double prior = _prior_log_odds(alpha, beta, p)
    cdef double curv = 0.5 * (1.0 / (alpha * alpha) - 1.0 / (beta * beta))
    with nogil:
        for e in range(m):
            out[e] = _logistic(prior + curv * r[e] * r[e])


def dist_em_step(const idx_t[::1] tails, const idx_t[::1] heads,
                 const double[::1] b, const double[::1] x, const double[::1] pi,
                 double alpha, double beta, double p, double tau,
                 double[::1] x_out, double[::1] pi_out, double[::1] grad):
    """One synchronous round: gradient step on x, then posterior refresh.

    Returns the Euclidean norm of the step ``x_out - x``.
    """
    cdef Py_ssize_t e, v, m = b.shape[0], n = x.shape[0]
    cdef double ia2 = 1.0 / (alpha * alpha), ib2 = 1.0 / (beta * beta)
    cdef double prior = _prior_log_odds(alpha, beta, p)
    cdef double curv = 0.5 * (ia2 - ib2)
    cdef double w, g, r, d, step2 = 0.0
    with nogil:
        for v in range(n):
            grad[v] = 0.0
        for e in range(m):
            w = (1.0 - pi[e]) * ia2 + pi[e] * ib2
            g = w * (x[heads[e]] - x[tails[e]] - b[e])
            grad[heads[e]] += g
            grad[tails[e]] -= g
        for v in range(n):
            x_out[v] = x[v] - tau * grad[v]
            d = x_out[v] - x[v]
            step2 += d * d
        for e in range(m):
            r = b[e] - (x_out[heads[e]] - x_out[tails[e]])
            pi_out[e] = _logistic(prior + curv * r * r)
    return sqrt(step2)


def lae_subgrad_step(const idx_t[::1] tails, const idx_t[::1] heads,
                     const double[::1] b, const double[::1] x, double tau,
                     double[::1] x_out):
    """``x + tau * A^T sgn(b - A x)``; returns the l1 residual at ``x``."""
    cdef Py_ssize_t e, v, m = b.shape[0], n = x.shape[0]
    cdef double r, s, l1 = 0.0
    with nogil:
        for v in range(n):
            x_out[v] = x[v]
        for e in range(m):
            r = b[e] - (x[heads[e]] - x[tails[e]])
            l1 += fabs(r)
            if r > 0:
                s = tau
            elif r < 0:
                s = -tau
            else:
                s = 0.0
            x_out[heads[e]] += s
            x_out[tails[e]] -= s
    return l1
