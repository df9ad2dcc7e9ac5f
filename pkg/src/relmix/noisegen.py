"""Seeded synthetic data: states, Erdos-Renyi topologies and measurements.

Every generator is a pure function of its arguments and ``seed``. A seed may
be an int, a ``numpy.random.SeedSequence`` or a sequence of ints; it is turned
into independent child streams with ``SeedSequence.spawn`` wherever a
function needs more than one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graphcore import Graph, incidence_matrix, is_connected

__all__ = [
    "MixtureNoise",
    "MismatchNoise",
    "MeasurementSet",
    "GenerationError",
    "generate_state",
    "generate_er_graph",
    "sample_measurements",
    "sample_mismatch",
    "trial_streams",
]

ER_MAX_ATTEMPTS = 10_000


class GenerationError(ValueError):
    pass


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def trial_streams(root_seed: int, trial: int) -> dict[str, np.random.SeedSequence]:
    """Independent graph/state/measurement streams for one trial.

    The measurement stream is split further by the samplers (labels, noise,
    outliers).
    """
    ss = np.random.SeedSequence([int(root_seed), int(trial)])
    graph, state, measurements = ss.spawn(3)
    return {"graph": graph, "state": state, "measurements": measurements}


@dataclass(frozen=True)
class MixtureNoise:
    """Two-component Gaussian mixture: std ``alpha`` w.p. ``1-p``, ``beta`` w.p. ``p``."""

    alpha: float
    beta: float
    p: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise GenerationError(f"alpha must be positive, got {self.alpha}")
        if not self.beta >= self.alpha:
            raise GenerationError(f"beta ({self.beta}) must be at least alpha ({self.alpha})")
        if not 0 <= self.p < 0.5:
            raise GenerationError(f"p must lie in [0, 1/2), got {self.p}")

    def to_dict(self):
        return {"model": "mixture", "alpha": self.alpha, "beta": self.beta, "p": self.p}


@dataclass(frozen=True)
class MismatchNoise:
    """Gaussian inliers with uniform outliers on ``[-delta/4, delta/4]``."""

    alpha: float
    p: float
    delta: float = 2.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise GenerationError(f"alpha must be nonnegative, got {self.alpha}")
        if not 0 <= self.p <= 1:
            raise GenerationError(f"p must lie in [0, 1], got {self.p}")
        if not self.delta > 0:
            raise GenerationError(f"delta must be positive, got {self.delta}")

    def to_dict(self):
        return {"model": "mismatch", "alpha": self.alpha, "p": self.p, "delta": self.delta}


@dataclass(frozen=True)
class MeasurementSet:
    graph: Graph
    b: np.ndarray
    x_true: np.ndarray | None = None
    z_true: np.ndarray | None = None
    noise: dict | None = None
    seed: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.shape != (self.graph.n_edges,):
            raise GenerationError(f"b has shape {b.shape}, graph has {self.graph.n_edges} edges")
        object.__setattr__(self, "b", b)
        if self.x_true is not None:
            x = np.asarray(self.x_true, dtype=float)
            if x.shape != (self.graph.n_nodes,):
                raise GenerationError("x_true length differs from n_nodes")
            if abs(x.mean()) > 1e-12:
                raise GenerationError("x_true must be mean-centered")
            object.__setattr__(self, "x_true", x)
        if self.z_true is not None:
            z = np.asarray(self.z_true, dtype=np.int8)
            if z.shape != (self.graph.n_edges,):
                raise GenerationError("z_true length differs from n_edges")
            object.__setattr__(self, "z_true", z)

    @property
    def A(self) -> np.ndarray:
        return incidence_matrix(self.graph)

    def to_dict(self) -> dict:
        out = {"graph": self.graph.to_dict(), "b": _floats(self.b)}
        if self.x_true is not None:
            out["x_true"] = _floats(self.x_true)
        if self.z_true is not None:
            out["z_true"] = [int(z) for z in self.z_true]
        out["noise"] = self.noise
        out["seed"] = _seed_repr(self.seed)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "MeasurementSet":
        return cls(
            graph=Graph.from_dict(data["graph"]),
            b=np.array(data["b"], dtype=float),
            x_true=None if data.get("x_true") is None else np.array(data["x_true"], dtype=float),
            z_true=None if data.get("z_true") is None else np.array(data["z_true"]),
            noise=data.get("noise"),
            seed=data.get("seed"),
        )


def _floats(arr):
    # json uses float.__repr__, which is already round-trip exact; force 17
    # significant digits so the files are stable across platforms.
    return [float(format(float(v), ".17g")) for v in arr]


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    if isinstance(seed, (np.integer,)):
        return int(seed)
    return seed


def generate_state(n: int, seed, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    """I.i.d. uniform ``(low, high)`` entries, then mean-centered."""
    if n < 2:
        raise GenerationError(f"need at least 2 nodes, got {n}")
    rng = np.random.default_rng(_seed_sequence(seed))
    x = rng.uniform(low, high, size=n)
    x = x - x.mean()
    return x - x.mean()


def generate_er_graph(n: int, p_edge: float, seed, max_attempts: int = ER_MAX_ATTEMPTS,
                      return_attempts: bool = False):
    """Erdos-Renyi graph G(n, p_edge), resampled until connected.

    Each unordered pair ``i < j`` is kept independently with probability
    ``p_edge`` and stored as edge ``(j, i)``. Candidates are drawn from one
    stream, so the result is a deterministic function of ``seed``.
    """
    if n < 2:
        raise GenerationError(f"need at least 2 nodes, got {n}")
    if not 0 < p_edge <= 1:
        raise GenerationError(f"p_edge must lie in (0, 1], got {p_edge}")
    rng = np.random.default_rng(_seed_sequence(seed))
    iu, ju = np.triu_indices(n, k=1)
    for attempt in range(1, max_attempts + 1):
        keep = rng.random(iu.size) < p_edge
        g = Graph(n, tuple(zip(ju[keep].tolist(), iu[keep].tolist())))
        if g.n_edges >= n - 1 and is_connected(g):
            return (g, attempt) if return_attempts else g
    raise GenerationError(
        f"no connected G({n}, {p_edge}) in {max_attempts} draws; use a larger p_edge"
    )


def _check_state(g: Graph, x_true) -> np.ndarray:
    x = np.asarray(x_true, dtype=float)
    if x.shape != (g.n_nodes,):
        raise GenerationError(f"x_true has shape {x.shape}, graph has {g.n_nodes} nodes")
    return x


def sample_measurements(g: Graph, x_true, noise: MixtureNoise, seed) -> MeasurementSet:
    """Relative measurements ``b = A x + eta`` under Gaussian-mixture noise."""
    x = _check_state(g, x_true)
    ss = _seed_sequence(seed)
    label_ss, noise_ss = ss.spawn(2)
    m = g.n_edges
    z = (np.random.default_rng(label_ss).random(m) < noise.p).astype(np.int8)
    sigma = np.where(z == 1, noise.beta, noise.alpha)
    eta = sigma * np.random.default_rng(noise_ss).standard_normal(m)
    b = x[g.heads] - x[g.tails] + eta
    return MeasurementSet(g, b, x, z, noise.to_dict(), seed)


def sample_mismatch(g: Graph, x_true, noise: MismatchNoise, seed) -> MeasurementSet:
    """Gaussian inliers plus ``z``-selected uniform outliers on ``[-delta/4, delta/4]``."""
    x = _check_state(g, x_true)
    ss = _seed_sequence(seed)
    label_ss, noise_ss, outlier_ss = ss.spawn(3)
    m = g.n_edges
    z = (np.random.default_rng(label_ss).random(m) < noise.p).astype(np.int8)
    eta = np.random.default_rng(noise_ss).standard_normal(m)
    half = noise.delta / 4.0
    gamma = np.random.default_rng(outlier_ss).uniform(-half, half, size=m)
    b = x[g.heads] - x[g.tails] + (1 - z) * noise.alpha * eta + z * gamma
    return MeasurementSet(g, b, x, z, noise.to_dict(), seed)
