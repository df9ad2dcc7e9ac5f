"""Estimators of node values from relative measurements ``b ~ A x``.

Every estimator returns an :class:`EstimateResult` whose ``x_hat`` is
mean-centered. Iterative estimators start from ``x = 0`` and stop when the
relative step ``||x_new - x|| / ||x||`` drops below ``tol``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .graphcore import (
    DisconnectedGraphError,
    kernel_dimension,
    pinv_laplacian,
    spectral_norm,
    weighted_laplacian,
)
from .objectives import (
    edge_weights,
    objective_v,
    objective_v_tilde,
    posterior,
    project_smallest,
)

__all__ = [
    "EstimateResult",
    "LsEmConfig",
    "DistEmConfig",
    "ConfigError",
    "wls",
    "ls",
    "gd_wls",
    "lae",
    "l0_oracle",
    "ls_em",
    "dist_ls_em",
    "dist_tau_bound",
    "stable_tau",
    "ls_em_fixed_point_residuals",
    "dist_fixed_point_residuals",
    "relative_step",
]

BETA_BLOWUP = 1e8
PI_MASS_FLOOR = 1e-12


class ConfigError(ValueError):
    pass


@dataclass
class EstimateResult:
    """Output of one estimator run.

    ``trace`` holds one dict per iteration with keys ``iter``, ``objective``,
    ``step_norm``, ``alpha_hat``, ``beta_hat``, ``epsilon``, ``kappa`` and
    ``nqe`` (``None`` where a quantity does not apply).
    """

    x_hat: np.ndarray
    pi: np.ndarray | None = None
    alpha_hat: float | None = None
    beta_hat: float | None = None
    iterations: int = 0
    converged: bool = True
    trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [float(format(v, ".17g")) for v in a]

        return {
            "x_hat": arr(self.x_hat),
            "pi": arr(self.pi),
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "iterations": self.iterations,
            "converged": self.converged,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@dataclass(frozen=True)
class LsEmConfig:
    """Parameters of the centralized LS-EM iteration.

    ``s=None`` resolves to ``N - 1`` (enough reliable edges for a spanning
    tree). ``c1``/``c2`` weight the step-size and kernel terms of the
    regularization schedule.
    """

    p: float = 0.1
    s: int | None = None
    c1: float = 1.0
    c2: float = 1.0
    alpha0: float = 0.3
    beta0: float = 0.6
    tol: float = 1e-4
    max_iter: int = 500

    def validate(self, n_nodes: int, n_edges: int) -> "LsEmConfig":
        if not 0 < self.p < 0.5:
            raise ConfigError(f"p must lie in (0, 1/2), got {self.p}")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ConfigError("c1 and c2 must be positive")
        if not 0 < self.alpha0 < self.beta0:
            raise ConfigError(f"need 0 < alpha0 < beta0, got {self.alpha0}, {self.beta0}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ConfigError("tol must be positive and max_iter at least 1")
        s = n_nodes - 1 if self.s is None else int(self.s)
        if not 1 <= s < n_edges:
            raise ConfigError(f"s must lie in [1, {n_edges - 1}], got {s}")
        return replace(self, s=s)


@dataclass(frozen=True)
class DistEmConfig:
    """Parameters of the distributed LS-EM iteration.

    ``tau=None`` picks ``0.9 * stable_tau``. An explicit ``tau`` must satisfy
    ``tau < alpha / ||A||^2``.
    """

    p: float = 0.1
    alpha: float = 0.05
    beta: float = 0.25
    tau: float | None = None
    tol: float = 1e-4
    max_iter: int = 5000

    def validate(self, A: np.ndarray) -> "DistEmConfig":
        if not 0 < self.p < 0.5:
            raise ConfigError(f"p must lie in (0, 1/2), got {self.p}")
        if not 0 < self.alpha < self.beta:
            raise ConfigError(f"need 0 < alpha < beta, got {self.alpha}, {self.beta}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ConfigError("tol must be positive and max_iter at least 1")
        bound = dist_tau_bound(A, self.alpha)
        if self.tau is None:
            return replace(self, tau=0.9 * stable_tau(A, self.alpha))
        if not 0 < self.tau < bound:
            raise ConfigError(
                f"tau = {self.tau:.6g} violates the step bound tau < alpha/||A||^2 = {bound:.6g}"
            )
        safe = stable_tau(A, self.alpha)
        if self.tau >= safe:
            warnings.warn(
                f"tau = {self.tau:.3g} exceeds alpha^2/||A||^2 = {safe:.3g}; "
                "the gradient step may not be a descent step",
                RuntimeWarning,
                stacklevel=3,
            )
        return self


def dist_tau_bound(A, alpha: float) -> float:
    """The admissible step bound ``alpha / ||A||^2`` enforced by ``dist_ls_em``."""
    return alpha / spectral_norm(A) ** 2


def stable_tau(A, alpha: float) -> float:
    """``alpha^2 / ||A||^2``: below it ``I - tau L_W`` is positive definite for all labels."""
    return alpha**2 / spectral_norm(A) ** 2


def relative_step(x_new, x_old) -> float:
    return float(np.linalg.norm(x_new - x_old) / max(np.linalg.norm(x_old), 1e-30))


def _center(x):
    return x - x.mean()


def _check_connected(A):
    if A.shape[1] > 1 and kernel_dimension(A.T @ A) > 1:
        raise DisconnectedGraphError("the measurement graph is disconnected")


def _nqe(x, x_true):
    if x_true is None:
        return None
    xt = _center(np.asarray(x_true, dtype=float))
    return float(100.0 * np.sum((_center(x) - xt) ** 2) / np.sum(xt**2))


def _wls_solve(A, w, b):
    L = weighted_laplacian(A, w)
    P, kdim = pinv_laplacian(L, return_kernel_dim=True)
    return _center(P @ (A.T @ (w * b))), kdim


# ----------------------------------------------------------------- least squares

def wls(b, A, w) -> EstimateResult:
    """Minimum-norm weighted least squares ``L_W^+ A^T W b``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_connected(A)
    x, _ = _wls_solve(A, np.asarray(w, dtype=float), b)
    return EstimateResult(x_hat=x, iterations=0, converged=True)


def ls(b, A) -> EstimateResult:
    """Unweighted least squares: every measurement presumed good."""
    return wls(b, A, np.ones(np.shape(A)[0]))


def gd_wls(b, A, w, tau, tol: float = 1e-10, max_iter: int = 100_000) -> EstimateResult:
    """Gradient iteration ``x <- (I - tau L_W) x + tau A^T W b`` from ``x = 0``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.asarray(w, dtype=float)
    L = weighted_laplacian(A, w)
    lmax = float(np.linalg.eigvalsh(L)[-1])
    if not 0 < tau < 2.0 / lmax:
        raise ConfigError(f"tau must lie in (0, 2/||L_W||) = (0, {2.0 / lmax:.6g}), got {tau}")
    M = np.eye(L.shape[0]) - tau * L
    c = tau * (A.T @ (w * b))
    x = np.zeros(A.shape[1])
    trace = []
    for t in range(1, max_iter + 1):
        x_new = M @ x + c
        sc = relative_step(x_new, x)
        trace.append({"iter": t, "step_norm": float(np.linalg.norm(x_new - x)),
                      "mean": float(x_new.mean())})
        x = x_new
        if sc < tol:
            return EstimateResult(x_hat=x, iterations=t, converged=True, trace=trace)
    return EstimateResult(x_hat=x, iterations=max_iter, converged=False, trace=trace)


# ------------------------------------------------------------------------- l1

def lae(b, A, mode: str = "irls", tol: float = 1e-9, max_iter: int = 10_000,
        delta: float = 1e-8, step0: float | None = None, decay: float = 0.5,
        x_true=None, record_trace: bool = False) -> EstimateResult:
    """Least absolute deviations ``min ||b - A x||_1`` over mean-zero ``x``.

    ``mode="irls"`` reweights with ``1/max(|r_e|, d)`` while shrinking ``d``
    geometrically from the least-squares residual scale to ``delta``; the
    continuation selects a central point when the minimizer is not unique.
    ``mode="subgradient"`` runs ``x <- x + tau_t A^T sgn(b - A x)`` from zero
    with ``tau_t = step0 / (t + 1)**decay`` and returns the best iterate.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_connected(A)
    if mode == "irls":
        return _lae_irls(b, A, tol, max_iter, delta, x_true, record_trace)
    if mode == "subgradient":
        return _lae_subgradient(b, A, max_iter, step0, decay, x_true, record_trace)
    raise ConfigError(f"unknown LAE mode {mode!r}; expected 'irls' or 'subgradient'")


def _lae_irls(b, A, tol, max_iter, delta, x_true, record_trace):
    x, _ = _wls_solve(A, np.ones(A.shape[0]), b)
    d = max(float(np.max(np.abs(b - A @ x), initial=0.0)), delta)
    stage_iters = 0
    trace = []
    for t in range(1, max_iter + 1):
        r = b - A @ x
        x_new, _ = _wls_solve(A, 1.0 / np.maximum(np.abs(r), d), b)
        sc = relative_step(x_new, x)
        dx = float(np.linalg.norm(x_new - x))
        x = x_new
        stage_iters += 1
        if record_trace:
            trace.append({"iter": t, "objective": float(np.abs(b - A @ x).sum()),
                          "step_norm": dx, "smoothing": d, "nqe": _nqe(x, x_true)})
        if sc < tol or stage_iters >= 50:
            if d <= delta and sc < tol:
                return EstimateResult(x_hat=x, iterations=t, converged=True, trace=trace,
                                      diagnostics={"l1": float(np.abs(b - A @ x).sum())})
            d = max(d / 10.0, delta)
            stage_iters = 0
    return EstimateResult(x_hat=x, iterations=max_iter, converged=False, trace=trace,
                          diagnostics={"l1": float(np.abs(b - A @ x).sum())})


def default_subgradient_step(A) -> float:
    """Initial LAE step: half the inverse of the largest node degree."""
    deg = np.abs(A).sum(axis=0)
    return 0.5 / float(deg.max())


def _lae_subgradient(b, A, max_iter, step0, decay, x_true, record_trace):
    tails = np.ascontiguousarray(np.argmin(A, axis=1), dtype=np.intp)
    heads = np.ascontiguousarray(np.argmax(A, axis=1), dtype=np.intp)
    step0 = default_subgradient_step(A) if step0 is None else step0
    x = np.zeros(A.shape[1])
    x_next = np.empty_like(x)
    best_x, best_l1 = x.copy(), math.inf
    trace = []
    for t in range(max_iter):
        l1 = kernels.lae_subgrad_step(tails, heads, b, x, step0 / (t + 1) ** decay, x_next)
        if l1 < best_l1:
            best_l1, best_x = l1, x.copy()
        if record_trace:
            trace.append({"iter": t, "objective": l1, "nqe": _nqe(x, x_true)})
        x, x_next = x_next, x
    l1 = float(np.abs(b - A @ x).sum())
    if record_trace:
        trace.append({"iter": max_iter, "objective": l1, "nqe": _nqe(x, x_true)})
    if l1 < best_l1:
        best_l1, best_x = l1, x.copy()
    return EstimateResult(x_hat=_center(best_x), iterations=max_iter, converged=True,
                          trace=trace, diagnostics={"l1": best_l1, "step0": step0})


# ------------------------------------------------------------------------- l0

MAX_L0_EDGES = 20


def _interval_feasible(A, b, radius):
    """Solve ``|b - A x| <= radius`` with ``sum(x) = 0``; ``None`` if infeasible."""
    m, n = A.shape
    res = linprog(
        np.zeros(n),
        A_ub=np.vstack([A, -A]),
        b_ub=np.concatenate([b + radius, radius - b]),
        A_eq=np.ones((1, n)),
        b_eq=[0.0],
        bounds=[(None, None)] * n,
        method="highs",
    )
    return res.x if res.status == 0 else None


def l0_oracle(b, A, alpha: float, beta: float):
    """Fewest outlier flags ``z`` making the 3-sigma interval constraints feasible.

    Supports are tried in increasing size (lexicographic within a size), so
    the first feasible ``z`` has minimum cardinality. Returns ``(x, z)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m = A.shape[0]
    if m > MAX_L0_EDGES:
        raise ConfigError(f"exhaustive search is limited to {MAX_L0_EDGES} edges, got {m}")
    for k in range(m + 1):
        for support in itertools.combinations(range(m), k):
            z = np.zeros(m, dtype=np.int8)
            z[list(support)] = 1
            x = _interval_feasible(A, b, 3 * alpha + 3 * z * (beta - alpha))
            if x is not None:
                return _center(x), z
    raise RuntimeError("no feasible outlier labelling; the interval system is inconsistent")


# ---------------------------------------------------------------------- LS-EM

def _em_surrogate(x, pi, alpha, beta, eps, b, A, p) -> float:
    """``V + (eps/2)(1/alpha^2 + 1/beta^2)``: the function the scale updates minimize exactly."""
    return objective_v(x, pi, alpha, beta, b, A, p) + 0.5 * eps * (alpha ** -2 + beta ** -2)


def ls_em(b, A, config: LsEmConfig = LsEmConfig(), x_true=None) -> EstimateResult:
    """Centralized LS-EM: WLS solve, posterior, projection, epsilon and scale updates.

    The ``epsilon`` schedule is ``eps <- min(eps, 1/log(t+1) + c1*||dx|| +
    c2*(kappa - 1))`` with ``1/log(1)`` read as ``+inf``; the scale updates
    use the ``epsilon`` from before that step.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    cfg = config.validate(n, m)
    _check_connected(A)
    p, s = cfg.p, cfg.s

    x = np.zeros(n)
    pi = np.zeros(m)
    alpha, beta, eps = cfg.alpha0, cfg.beta0, 1.0
    trace = [{
        "iter": 0,
        "objective": objective_v_tilde(x, pi, alpha, beta, eps, b, A, p),
        "surrogate": _em_surrogate(x, pi, alpha, beta, eps, b, A, p),
        "step_norm": None, "alpha_hat": alpha, "beta_hat": beta, "epsilon": eps,
        "kappa": None, "nqe": _nqe(x, x_true),
    }]
    status = "max_iter"
    eps_used = eps
    kappa = 1
    t = 0
    while t < cfg.max_iter:
        w = edge_weights(pi, alpha, beta)
        x_new, kappa = _wls_solve(A, w, b)
        r = b - A @ x_new
        pi_new = project_smallest(posterior(r, alpha, beta, p), s)
        dx = float(np.linalg.norm(x_new - x))
        theta = math.inf if t == 0 else 1.0 / math.log(t + 1) + cfg.c1 * dx + cfg.c2 * (kappa - 1)
        eps_new = min(eps, theta)
        good_mass = float(np.sum(1.0 - pi_new))
        bad_mass = float(np.sum(pi_new))
        if bad_mass < PI_MASS_FLOOR:
            status = "pi_mass_collapse"
            break
        alpha_new = math.sqrt((eps + float(np.sum((1.0 - pi_new) * r * r))) / good_mass)
        beta_new = math.sqrt((eps + float(np.sum(pi_new * r * r))) / bad_mass)
        if not beta_new <= BETA_BLOWUP:
            status = "beta_blowup"
            break
        sc = relative_step(x_new, x)
        eps_used = eps
        x, pi, alpha, beta, eps = x_new, pi_new, alpha_new, beta_new, eps_new
        t += 1
        trace.append({
            "iter": t,
            "objective": objective_v_tilde(x, pi, alpha, beta, eps, b, A, p),
            "surrogate": _em_surrogate(x, pi, alpha, beta, eps, b, A, p),
            "step_norm": dx, "alpha_hat": alpha, "beta_hat": beta, "epsilon": eps,
            "kappa": kappa, "nqe": _nqe(x, x_true),
        })
        if sc < cfg.tol:
            status = "converged"
            break

    diagnostics = {
        "status": status, "epsilon": eps, "epsilon_last_update": eps_used,
        "kappa": kappa, "s": s, "c1": cfg.c1, "c2": cfg.c2,
        "fixed_point": ls_em_fixed_point_residuals(b, A, x, pi, alpha, beta, eps_used, p, s),
    }
    return EstimateResult(x_hat=x, pi=pi, alpha_hat=alpha, beta_hat=beta, iterations=t,
                          converged=status == "converged", trace=trace,
                          diagnostics=diagnostics)


def ls_em_fixed_point_residuals(b, A, x, pi, alpha, beta, epsilon, p, s) -> dict:
    """How far a state is from the LS-EM fixed-point equations.

    ``x``: relative distance to the WLS solution under the state's own
    weights. ``pi``: largest absolute gap to the projected posterior.
    ``alpha``/``beta``: relative gap to the regularized scale estimates.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x_star, _ = _wls_solve(A, edge_weights(pi, alpha, beta), b)
    r = b - A @ x
    pi_star = project_smallest(posterior(r, alpha, beta, p), s)
    a_star = math.sqrt((epsilon + float(np.sum((1 - pi) * r * r))) / float(np.sum(1 - pi)))
    b_star = math.sqrt((epsilon + float(np.sum(pi * r * r))) / max(float(np.sum(pi)), 1e-300))
    return {
        "x": float(np.linalg.norm(x - x_star) / max(np.linalg.norm(x), 1e-30)),
        "pi": float(np.max(np.abs(pi - pi_star), initial=0.0)),
        "alpha": abs(alpha - a_star) / alpha,
        "beta": abs(beta - b_star) / beta,
    }


# ---------------------------------------------------------- distributed LS-EM

def _edge_endpoints(A):
    tails = np.ascontiguousarray(np.argmin(A, axis=1), dtype=np.intp)
    heads = np.ascontiguousarray(np.argmax(A, axis=1), dtype=np.intp)
    return tails, heads


def dist_ls_em(b, A, config: DistEmConfig = DistEmConfig(), x_true=None,
               record_trace: bool = True, callback=None) -> EstimateResult:
    """Distributed LS-EM with known scales: one gradient step, then posterior.

    ``callback(t, x, pi)``, if given, sees every iterate (after the posterior
    refresh) and may return ``True`` to stop early.
    """
    A = np.asarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    cfg = config.validate(A)
    m, n = A.shape
    tails, heads = _edge_endpoints(A)
    alpha, beta, p, tau = cfg.alpha, cfg.beta, cfg.p, cfg.tau

    x = np.zeros(n)
    pi = np.zeros(m)
    x_next, pi_next, grad = np.empty(n), np.empty(m), np.empty(n)
    trace = []
    if record_trace:
        trace.append({"iter": 0, "objective": objective_v(x, pi, alpha, beta, b, A, p),
                      "step_norm": None, "alpha_hat": alpha, "beta_hat": beta,
                      "epsilon": None, "kappa": None, "nqe": _nqe(x, x_true)})
    status = "max_iter"
    t = 0
    while t < cfg.max_iter:
        step = kernels.dist_em_step(tails, heads, b, x, pi, alpha, beta, p, tau,
                                    x_next, pi_next, grad)
        sc = step / max(float(np.linalg.norm(x)), 1e-30)
        x, x_next = x_next, x
        pi, pi_next = pi_next, pi
        t += 1
        if record_trace:
            trace.append({"iter": t, "objective": objective_v(x, pi, alpha, beta, b, A, p),
                          "step_norm": step, "alpha_hat": alpha, "beta_hat": beta,
                          "epsilon": None, "kappa": None, "nqe": _nqe(x, x_true)})
        if not math.isfinite(sc):
            status = "diverged"
            break
        if callback is not None and callback(t, x, pi):
            status = "stopped"
            break
        if sc < cfg.tol:
            status = "converged"
            break

    x = x.copy()
    diagnostics = {
        "status": status, "tau": tau, "tau_bound": dist_tau_bound(A, alpha),
        "fixed_point": dist_fixed_point_residuals(b, A, x, pi, alpha, beta, p),
    }
    return EstimateResult(x_hat=x, pi=pi.copy(), alpha_hat=alpha, beta_hat=beta,
                          iterations=t, converged=status == "converged", trace=trace,
                          diagnostics=diagnostics)


def dist_fixed_point_residuals(b, A, x, pi, alpha, beta, p) -> dict:
    """Stationarity gaps of a distributed LS-EM state.

    ``gradient`` is ``||L_W x - A^T W b||``; ``x`` is the relative distance to
    the WLS solution under the state's weights; ``pi`` is the largest gap to
    the posterior at ``x``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    w = edge_weights(pi, alpha, beta)
    grad = A.T @ (w * (A @ x - b))
    x_star, _ = _wls_solve(A, w, b)
    return {
        "gradient": float(np.linalg.norm(grad)),
        "x": float(np.linalg.norm(x - x_star) / max(np.linalg.norm(x), 1e-30)),
        "pi": float(np.max(np.abs(pi - posterior(b - A @ x, alpha, beta, p)), initial=0.0)),
    }
