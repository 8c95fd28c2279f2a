"""The two mixture-update implementations must be interchangeable."""

import math

import numpy as np
import pytest

from shadowpipe import kernels
from shadowpipe.kernels import (
    gmm_update_numba, gmm_update_numpy, make_gmm_state,
)

PARAMS = dict(alpha=0.05, var_threshold=16.0, background_ratio=0.9,
              init_variance=225.0, min_variance=4.0)


def random_frames(n, h, w, c, seed):
    rng = np.random.default_rng(seed)
    base = rng.uniform(40, 200, (h, w, c)).astype(np.float32)
    frames = []
    for i in range(n):
        frame = base + rng.normal(0, 3, (h, w, c))
        if i % 7 == 3:  # occasional intruder block
            frame[h // 4:h // 2, w // 4:w // 2] = 250.0
        frames.append(frame.astype(np.float32))
    return frames


@pytest.mark.parametrize("channels", [1, 3])
def test_numba_and_numpy_paths_agree(channels):
    s_np = make_gmm_state(10, 14, 5, channels)
    s_nb = tuple(a.copy() for a in s_np)
    for frame in random_frames(40, 10, 14, channels, seed=1):
        mask_np = gmm_update_numpy(*s_np, frame.copy(), **PARAMS)
        mask_nb = gmm_update_numba(*s_nb, frame.copy(), **PARAMS)
        assert np.array_equal(mask_np, mask_nb)
        for a, b in zip(s_np, s_nb):
            assert np.allclose(a, b, atol=1e-5)


def test_weight_normalization_invariant():
    state = make_gmm_state(8, 8, 5, 1)
    for frame in random_frames(60, 8, 8, 1, seed=2):
        kernels.gmm_update(*state, frame, **PARAMS)
        weights = state[2]
        totals = weights.sum(axis=2)
        assert np.all(np.abs(totals - 1.0) <= 1e-6)
        assert np.all(weights >= 0)


def test_mode_count_bounded():
    k = 3
    state = make_gmm_state(6, 6, k, 1)
    rng = np.random.default_rng(4)
    for _ in range(50):
        # wildly different frames force constant mode replacement
        frame = rng.uniform(0, 255, (6, 6, 1)).astype(np.float32)
        kernels.gmm_update(*state, frame, **PARAMS)
        assert (state[2] > 0).sum(axis=2).max() <= k


def test_static_scene_monotone_burn_in():
    rng = np.random.default_rng(6)
    state = make_gmm_state(16, 16, 5, 1)
    alpha = 0.1
    counts = []
    for _ in range(int(math.ceil(1 / alpha)) + 2):
        frame = (128 + rng.normal(0, 2, (16, 16, 1))).astype(np.float32)
        fg = kernels.gmm_update(*state, frame, alpha=alpha,
                                var_threshold=16.0, background_ratio=0.9,
                                init_variance=225.0, min_variance=4.0)
        counts.append(int(fg.sum()))
    assert counts == sorted(counts, reverse=True)
    assert counts[int(math.ceil(1 / alpha)) - 1] == 0


def test_env_flag_selects_numpy_backend(monkeypatch):
    monkeypatch.setenv("SHADOWPIPE_PURE_NUMPY", "1")
    assert kernels.active_backend() == "numpy"
    monkeypatch.delenv("SHADOWPIPE_PURE_NUMPY")
    assert kernels.active_backend() == ("numba" if kernels.HAS_NUMBA else "numpy")
