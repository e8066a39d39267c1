"""Backend equivalence for the attack kernels (numba vs plain NumPy)."""

import os
import subprocess
import sys

import numpy as np
import pytest

from obdgate import _kernels
from obdgate._kernels import (
    _profile_speeds_py,
    _score_profile_loops,
    _score_profile_np,
    backend_name,
    profile_speeds,
    score_profile,
)


def random_path_arrays(rng, n_edges):
    lens = rng.uniform(80.0, 400.0, size=n_edges)
    lims = rng.choice([50.0, 60.0, 72.0], size=n_edges) / 3.6
    caps = np.empty(n_edges + 1)
    caps[0] = 0.0
    for i in range(1, n_edges):
        caps[i] = 0.0 if rng.random() < 0.3 else min(lims[i - 1], lims[i])
    caps[n_edges] = 0.0
    return lens, lims, caps


def test_backend_is_reported():
    assert backend_name() in ("numba", "numpy")


def test_profile_backends_agree():
    rng = np.random.default_rng(42)
    for _ in range(25):
        lens, lims, caps = random_path_arrays(rng, int(rng.integers(1, 12)))
        active = profile_speeds(lens, lims, caps, 2.0, 1.0)
        plain = _profile_speeds_py(lens, lims, caps, 2.0, 1.0)
        assert np.array_equal(active, plain)


def test_score_backends_agree():
    rng = np.random.default_rng(43)
    for _ in range(50):
        a = rng.uniform(0, 25, size=int(rng.integers(1, 300)))
        b = rng.uniform(0, 25, size=int(rng.integers(1, 300)))
        s_loops = _score_profile_loops(a, b, 0.56, 2.0, 0.25)
        s_np = _score_profile_np(a, b, 0.56, 2.0, 0.25)
        assert s_loops == pytest.approx(s_np, rel=1e-12)
        assert score_profile(a, b, 0.56, 2.0, 0.25) == pytest.approx(s_np, rel=1e-12)


def test_score_empty_overlap_is_huge():
    assert _score_profile_np(np.empty(0), np.array([1.0]), 0.5, 2.0, 0.25) >= 1e17


def test_env_flag_forces_numpy_backend():
    env = dict(os.environ, OBDGATE_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", "from obdgate._kernels import backend_name; print(backend_name())"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_numpy_backend_behaves_identically_in_subprocess():
    # run a tiny profile in a fallback-forced interpreter and compare here
    code = (
        "import numpy as np\n"
        "from obdgate._kernels import profile_speeds, backend_name\n"
        "assert backend_name() == 'numpy'\n"
        "out = profile_speeds(np.array([100.0]), np.array([10.0]), np.array([0.0, 0.0]), 2.0, 1.0)\n"
        "print(','.join(repr(float(v)) for v in out))\n"
    )
    env = dict(os.environ, OBDGATE_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    got = np.array([float(x) for x in out.stdout.strip().split(",")])
    here = profile_speeds(np.array([100.0]), np.array([10.0]), np.array([0.0, 0.0]), 2.0, 1.0)
    assert np.array_equal(got, here)
