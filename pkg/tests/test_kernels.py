import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relmix import kernels
from relmix.objectives import posterior

from conftest import random_instance


def endpoints(ms):
    g = ms.graph
    return g.tails.astype(np.intp), g.heads.astype(np.intp)


def test_python_backend_always_available():
    assert "python" in kernels.available_backends()
    assert kernels.BACKEND in kernels.available_backends()
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_env_var_forces_python_backend():
    env = dict(os.environ, RELMIX_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import relmix; print(relmix.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@given(seed=st.integers(0, 10_000), alpha=st.floats(0.01, 1.0), ratio=st.floats(1.5, 20),
       p=st.floats(0.01, 0.49))
@settings(max_examples=30, deadline=None)
def test_posterior_kernel_matches_reference(seed, alpha, ratio, p):
    r = np.random.default_rng(seed).normal(scale=alpha * ratio, size=50)
    ref = posterior(r, alpha, alpha * ratio, p)
    for name in kernels.available_backends():
        out = np.empty_like(r)
        kernels.get_backend(name).posterior_into(r, alpha, alpha * ratio, p, out)
        np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-300)


def test_dist_step_matches_matrix_form(backend):
    ms = random_instance(3, n=25)
    A, b = ms.A, ms.b
    tails, heads = endpoints(ms)
    rng = np.random.default_rng(3)
    x, pi = rng.normal(size=25), rng.random(len(b))
    tau = 1e-4
    x_out, pi_out, grad = np.empty(25), np.empty(len(b)), np.empty(25)
    step = backend.dist_em_step(tails, heads, b, x, pi, 0.05, 0.25, 0.1, tau, x_out, pi_out, grad)
    w = (1 - pi) / 0.05**2 + pi / 0.25**2
    g_ref = A.T @ (w * (A @ x - b))
    np.testing.assert_allclose(grad, g_ref, rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(x_out, x - tau * g_ref, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pi_out, posterior(b - A @ x_out, 0.05, 0.25, 0.1), rtol=1e-12)
    assert step == pytest.approx(np.linalg.norm(x_out - x), rel=1e-12)


def test_lae_step_matches_matrix_form(backend):
    ms = random_instance(4, n=25)
    A, b = ms.A, ms.b
    tails, heads = endpoints(ms)
    x = np.random.default_rng(4).normal(size=25)
    x_out = np.empty(25)
    l1 = backend.lae_subgrad_step(tails, heads, b, x, 0.01, x_out)
    r = b - A @ x
    np.testing.assert_allclose(x_out, x + 0.01 * A.T @ np.sign(r), rtol=1e-13, atol=1e-15)
    assert l1 == pytest.approx(np.abs(r).sum(), rel=1e-13)


def test_backends_agree_bitwise_close():
    if len(kernels.available_backends()) < 2:
        pytest.skip("compiled backend not built")
    ms = random_instance(5, n=40)
    tails, heads = endpoints(ms)
    rng = np.random.default_rng(5)
    x, pi = rng.normal(size=40), rng.random(len(ms.b))
    outs = []
    for name in ("python", "cython"):
        xo, po, g = np.empty(40), np.empty(len(ms.b)), np.empty(40)
        kernels.get_backend(name).dist_em_step(tails, heads, ms.b, x, pi, 0.05, 0.25, 0.1, 1e-4,
                                               xo, po, g)
        outs.append((xo, po))
    np.testing.assert_allclose(outs[0][0], outs[1][0], rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(outs[0][1], outs[1][1], rtol=1e-12, atol=1e-300)
