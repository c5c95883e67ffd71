import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from speedbench import kernels
from speedbench.route import build_route

pytestmark = pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba not installed")


def _route(rng, n):
    return build_route(np.cumsum(rng.uniform(-3, 6, size=(n, 2)), axis=0))


def test_projection_paths_agree():
    rng = np.random.default_rng(0)
    for n in (2, 5, 40, 300):
        r = _route(rng, n)
        q = rng.uniform(r.keypoints.min(0) - 5, r.keypoints.max(0) + 5, size=(1500, 2))
        a = kernels.project_points_np(q, r.keypoints, r.seg_len, r.cum_dist)
        b = kernels.project_points_nb(q, r.keypoints, r.seg_len, r.cum_dist)
        assert np.allclose(a, b, rtol=0, atol=1e-9)


def test_nearest_keypoint_paths_agree():
    rng = np.random.default_rng(1)
    r = _route(rng, 200)
    q = rng.uniform(r.keypoints.min(0), r.keypoints.max(0), size=(2000, 2))
    # include exact keypoints and midpoints, where ties happen
    q = np.vstack([q, r.keypoints, 0.5 * (r.keypoints[1:] + r.keypoints[:-1])])
    assert np.array_equal(kernels.nearest_keypoint_np(q, r.keypoints), kernels.nearest_keypoint_nb(q, r.keypoints))


@given(st.lists(st.floats(0, 40).map(lambda x: round(x, 1)), min_size=0, max_size=200), st.integers(1, 60))
def test_tendency_paths_agree(v, horizon):
    v = np.array(v, dtype=np.float64)
    assert np.array_equal(kernels.tendency_np(v, horizon), kernels.tendency_nb(v, horizon))


def test_env_flag_selects_numpy():
    env = dict(os.environ, SPEEDBENCH_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from speedbench import kernels; print(kernels.backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
    assert kernels.backend() == ("numba" if kernels.USE_NUMBA else "numpy")
