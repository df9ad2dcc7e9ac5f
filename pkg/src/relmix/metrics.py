"""Error, classification and boxplot statistics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

__all__ = ["TrialRecord", "nqe", "misclassification", "summarize"]


@dataclass
class TrialRecord:
    trial: int
    seed: str
    estimator: str
    nqe_percent: float
    iterations: int
    converged: bool
    misclassification_rate: float | None = None
    runtime: float = 0.0

    def __post_init__(self):
        if not self.nqe_percent >= 0:
            raise ValueError(f"nqe_percent must be nonnegative, got {self.nqe_percent}")

    def as_row(self) -> dict:
        return asdict(self)


def nqe(x_hat, x_true) -> float:
    """Normalized quadratic error in percent, after centering both vectors.

    States are only identifiable up to a common offset, so both arguments are
    mean-centered before comparing.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_hat.shape != x_true.shape:
        raise ValueError(f"shape mismatch: {x_hat.shape} vs {x_true.shape}")
    xt = x_true - x_true.mean()
    denom = float(np.sum(xt**2))
    if denom == 0:
        raise ValueError("x_true is constant; NQE is undefined")
    return 100.0 * float(np.sum((x_hat - x_hat.mean() - xt) ** 2)) / denom


def misclassification(pi, z_true, threshold: float = 0.5) -> float:
    """Fraction of edges where ``pi > threshold`` disagrees with ``z_true``.

    A responsibility exactly at the threshold counts as a good edge.
    """
    pi = np.asarray(pi, dtype=float)
    z = np.asarray(z_true).astype(bool)
    if pi.shape != z.shape:
        raise ValueError(f"shape mismatch: {pi.shape} vs {z.shape}")
    if pi.size == 0:
        return 0.0
    return float(np.mean((pi > threshold) != z))


def summarize(values) -> dict:
    """Boxplot statistics with linear-interpolation quartiles and 1.5 IQR whiskers.

    Whiskers end at the most extreme data points inside the fences, as in
    MATLAB's and matplotlib's default boxplots.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("cannot summarize an empty list")
    q25, median, q75 = np.percentile(v, [25, 50, 75], method="linear")
    iqr = q75 - q25
    lo_fence, hi_fence = q25 - 1.5 * iqr, q75 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = np.sort(v[(v < lo_fence) | (v > hi_fence)])
    return {
        "n": int(v.size),
        "mean": float(v.mean()),
        "median": float(median),
        "q25": float(q25),
        "q75": float(q75),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(o) for o in outliers],
    }
