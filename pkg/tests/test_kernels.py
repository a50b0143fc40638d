"""The compiled and numpy kernels must agree on every input."""
import os
import subprocess
import sys

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bilateral_cf.kernels import _jit, _vec

speeds = arrays(float, st.integers(1, 12), elements=st.floats(0, 40))


def _platoon(seed, n, ring):
    rng = np.random.default_rng(seed)
    spacing = rng.uniform(6.0, 40.0, n)
    odo = 1000.0 - np.cumsum(spacing)
    length = rng.uniform(3.0, 6.0, n)
    track = float(spacing.sum() + 10.0) if ring else 0.0
    return odo, length, track, rng


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 15), st.booleans())
def test_gaps_agree(seed, n, ring):
    odo, length, track, _ = _platoon(seed, n, ring)
    f1, b1 = _jit.gaps(odo, length, track)
    f2, b2 = _vec.gaps(odo, length, track)
    np.testing.assert_array_equal(f1, f2)
    np.testing.assert_array_equal(b1, b2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 15))
def test_controller_kernels_agree(seed, n):
    odo, length, _, rng = _platoon(seed, n, False)
    v = rng.uniform(0, 30, n)
    front, back = _vec.gaps(odo, length, 0.0)
    vl, vf = np.roll(v, 1), np.roll(v, -1)
    np.testing.assert_allclose(
        _jit.idm_accel(v, front, vl, 30.0, 1.4, 2.0, 1.26, 2.0, 4.0),
        _vec.idm_accel(v, front, vl, 30.0, 1.4, 2.0, 1.26, 2.0, 4.0), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(
        _jit.gipps_accel(v, front, vl, 30.0, 3.0, 3.0, 1.0, 0.1),
        _vec.gipps_accel(v, front, vl, 30.0, 3.0, 3.0, 1.0, 0.1), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(
        _jit.bcm_accel(front, back, vl, v, vf, 0.5, 1.0, 1.26),
        _vec.bcm_accel(front, back, vl, v, vf, 0.5, 1.0, 1.26), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(
        _jit.unilateral_accel(front, v, vl, 0.5, 1.0, 1.26),
        _vec.unilateral_accel(front, v, vl, 0.5, 1.0, 1.26), rtol=1e-12, atol=1e-12)


@given(speeds)
def test_integrate_agrees_and_clamps(v):
    rng = np.random.default_rng(int(v.sum() * 1000) % 2**32)
    a = rng.uniform(-300, 30, v.shape[0])
    odo = np.zeros_like(v)
    o1, v1, r1 = _jit.integrate(odo, v, a, 0.1)
    o2, v2, r2 = _vec.integrate(odo, v, a, 0.1)
    np.testing.assert_array_equal(v1, v2)
    np.testing.assert_array_equal(o1, o2)
    np.testing.assert_array_equal(r1, r2)
    assert np.all(v1 >= 0)


def _rollout_csv(flag):
    code = (
        "from bilateral_cf import presets, kernels\n"
        "from bilateral_cf.sim import rollout\n"
        "import sys\n"
        "sc, _ = presets.build('perturbation', 'bcm', steps=600)\n"
        "sys.stdout.write(kernels.BACKEND + '\\n' + rollout(sc).to_csv_string())\n"
    )
    env = dict(os.environ, BILATERAL_CF_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, _, csv = out.stdout.partition("\n")
    return backend, csv


def test_env_flag_selects_backend_and_results_match():
    b_jit, csv_jit = _rollout_csv("0")
    b_vec, csv_vec = _rollout_csv("1")
    assert (b_jit, b_vec) == ("numba", "numpy")
    assert csv_jit == csv_vec


def test_absent_neighbours_are_inf_on_open_road():
    front, back = _vec.gaps(np.array([100.0, 50.0]), np.array([5.0, 5.0]), 0.0)
    assert np.isinf(front[0]) and np.isinf(back[1])
    assert front[1] == back[0] == 45.0
