"""Backend selection for the edge-sweep kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``RELMIX_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the NumPy twin is used. ``BACKEND`` names the active one.
"""

import os
from types import SimpleNamespace

from . import _kernels_py

_NAMES = ("posterior_into", "dist_em_step", "lae_subgrad_step")

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _namespace(mod, name):
    return SimpleNamespace(name=name, **{n: getattr(mod, n) for n in _NAMES})


def available_backends() -> list:
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_backend(name: str):
    if name == "cython":
        if _compiled is None:
            raise ImportError("relmix._kernels is not built; run `pip install -e .`")
        return _namespace(_compiled, "cython")
    if name == "python":
        return _namespace(_kernels_py, "python")
    raise ValueError(f"unknown kernel backend {name!r}")


if os.environ.get("RELMIX_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    _active = get_backend("python")
else:
    _active = get_backend("cython")

BACKEND = _active.name
posterior_into = _active.posterior_into
dist_em_step = _active.dist_em_step
lae_subgrad_step = _active.lae_subgrad_step
