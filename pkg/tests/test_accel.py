import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from higgsneck import _accel

needs_numba = pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba unavailable")

finite = st.floats(-10, 10, allow_nan=False)


def _stack(rng, n):
    return rng.normal(size=(n, 2, 2)) + 1j * rng.normal(size=(n, 2, 2))


def test_numpy_matmul_matches_einsum(rng):
    a, b = _stack(rng, 50), _stack(rng, 50)
    np.testing.assert_allclose(_accel.matmul2(a, b, use_numba=False), a @ b, atol=1e-13)


@needs_numba
def test_backends_agree_on_products_and_commutators(rng):
    a, b = _stack(rng, 300).reshape(10, 30, 2, 2), _stack(rng, 300).reshape(10, 30, 2, 2)
    np.testing.assert_allclose(_accel.matmul2(a, b, True), _accel.matmul2(a, b, False), atol=1e-13)
    np.testing.assert_allclose(_accel.comm2(a, b, True), _accel.comm2(a, b, False), atol=1e-13)


@needs_numba
def test_backends_agree_on_periodic_stencil(rng):
    f = rng.normal(size=(12, 40, 2, 2)) + 0j
    off, w = np.array([-2, -1, 1, 2]), np.array([1 / 12, -2 / 3, 2 / 3, -1 / 12])
    np.testing.assert_allclose(_accel.periodic_stencil(f, off, w, True),
                               _accel.periodic_stencil(f, off, w, False), atol=1e-13)


def test_stencil_differentiates_periodic_sine():
    th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    f = np.sin(th)[None, :]
    h = th[1]
    d = _accel.periodic_stencil(f, [-1, 1], [-1 / (2 * h), 1 / (2 * h)], use_numba=False)
    assert np.max(np.abs(d - np.cos(th))) < 1e-3


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, (3, 2, 2), elements=finite),
       hnp.arrays(np.float64, (3, 2, 2), elements=finite))
def test_commutator_is_antisymmetric_and_traceless(a, b):
    c = _accel.comm2(a, b)
    np.testing.assert_allclose(c, -_accel.comm2(b, a), atol=1e-9)
    assert np.max(np.abs(c[..., 0, 0] + c[..., 1, 1])) < 1e-9


def test_env_flag_forces_numpy_path():
    env = dict(os.environ, HIGGSNECK_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", "from higgsneck import _accel; print(_accel.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
