"""Small built-in instances."""

import numpy as np

from .graphcore import Graph

__all__ = ["example1", "EXAMPLE1_REPORTED"]


def example1() -> dict:
    """Five-node, six-edge worked example with two wide-noise edges (the last two).

    Nodes are 0-based, so the edge printed as ``(2, 1)`` is ``(1, 0)`` here.
    ``x_true`` is stored as printed (its mean is -0.0004, not exactly zero).
    """
    g = Graph(5, ((1, 0), (4, 0), (2, 1), (4, 1), (3, 2), (4, 3)))
    return {
        "graph": g,
        "b": np.array([0.658, 2.105, -0.322, 1.450, -0.094, 1.190]),
        "x_true": np.array([0.737, 0.088, 0.410, 0.125, -1.362]),
        "z_true": np.array([0, 0, 0, 0, 1, 1], dtype=np.int8),
        "alpha": 0.1,
        "beta": 1.0,
    }


# estimates and error ratios as reported for the worked example (3 decimals)
EXAMPLE1_REPORTED = {
    "wls": np.array([0.737, 0.078, 0.397, 0.156, -1.368]),
    "ls": np.array([0.803, 0.084, 0.222, 0.132, -1.242]),
    "lae": np.array([0.803, 0.144, 0.242, 0.112, -1.302]),
    "nqe_ratio": {"wls": 4.89e-4, "ls": 2.09e-2, "lae": 1.52e-2},
}
