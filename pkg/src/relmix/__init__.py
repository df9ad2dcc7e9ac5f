"""Estimation of node values from noisy relative measurements on a graph.

Measurement noise is a two-component Gaussian mixture; the package provides
weighted/unweighted least squares, least absolute deviations, the centralized
LS-EM iteration and its distributed gradient variant, plus a synchronous
message-passing simulation of the latter.
"""

from .graphcore import (
    DisconnectedGraphError,
    Graph,
    incidence_matrix,
    is_connected,
    kernel_dimension,
    pinv_laplacian,
    spectral_norm,
    weighted_laplacian,
)
from .kernels import BACKEND
from .noisegen import (
    MeasurementSet,
    MismatchNoise,
    MixtureNoise,
    generate_er_graph,
    generate_state,
    sample_measurements,
    sample_mismatch,
)
from .estimators import (
    DistEmConfig,
    EstimateResult,
    LsEmConfig,
    dist_ls_em,
    gd_wls,
    l0_oracle,
    lae,
    ls,
    ls_em,
    wls,
)
from .metrics import misclassification, nqe, summarize

__version__ = "0.1.0"
