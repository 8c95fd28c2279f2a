"""Per-pixel Gaussian-mixture background update, the pipeline's hot loop.

Two interchangeable implementations live here: a numba ``@njit`` kernel and a
vectorized pure-numpy fallback. Set ``SHADOWPIPE_PURE_NUMPY=1`` to force the
numpy path (the numba path is the default when numba imports cleanly).
``benchmarks/bench_kernels.py`` compares the two.

State per pixel: up to K modes, each (mean per channel, variance, weight),
kept sorted by weight descending with empty slots carrying weight 0. One
update step per frame:

1. d2_k = mean over channels of (x_c - mean_kc)^2 for each valid mode k.
2. The matched mode is the first (best-ranked) valid mode with
   d2_k < var_threshold * var_k.
3. A mode is a background mode when the total weight of better-ranked modes
   is <= background_ratio; the pixel is foreground unless it matched a
   background mode.
4. Matched: weights decay by (1 - alpha) and the matched mode gains alpha;
   its mean moves by alpha * (x - mean) and its variance relaxes toward d2.
   Unmatched: all weights decay and the weakest slot is replaced by a fresh
   mode (mean = x, variance = init_variance, weight = alpha).
5. Weights renormalize to sum 1 and modes re-sort by weight (stable).

Both implementations apply these steps in the same float32 order, so their
masks agree exactly and their states agree to float32 rounding.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    HAS_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]


def make_gmm_state(height: int, width: int, k_modes: int, channels: int):
    """Fresh (means, variances, weights) arrays; all slots empty."""
    means = np.zeros((height, width, k_modes, channels), dtype=np.float32)
    variances = np.zeros((height, width, k_modes), dtype=np.float32)
    weights = np.zeros((height, width, k_modes), dtype=np.float32)
    return means, variances, weights


def gmm_update_numpy(
    means: np.ndarray,
    variances: np.ndarray,
    weights: np.ndarray,
    frame: np.ndarray,
    alpha: float,
    var_threshold: float,
    background_ratio: float,
    init_variance: float,
    min_variance: float,
) -> np.ndarray:
    """Vectorized update. Mutates the state arrays, returns the foreground mask."""
    height, width, k_modes, channels = means.shape
    alpha32 = np.float32(alpha)
    decay = np.float32(1.0) - alpha32

    valid = weights > 0
    n_valid = valid.sum(axis=2)

    diff = frame[:, :, None, :] - means
    inv_channels = np.float32(1.0) / np.float32(channels)
    d2 = (diff * diff).sum(axis=3) * inv_channels
    match_ok = valid & (d2 < np.float32(var_threshold) * variances)
    any_match = match_ok.any(axis=2)
    matched = np.argmax(match_ok, axis=2)  # first matching mode; junk if none

    cum_excl = np.cumsum(weights, axis=2) - weights
    is_bg_mode = cum_excl <= np.float32(background_ratio)
    matched_is_bg = np.take_along_axis(
        is_bg_mode, matched[:, :, None], axis=2)[:, :, 0]
    fg = ~(any_match & matched_is_bg)

    weights *= decay

    rows, cols = np.nonzero(any_match)
    mk = matched[rows, cols]
    weights[rows, cols, mk] += alpha32
    means[rows, cols, mk] += alpha32 * diff[rows, cols, mk]
    variances[rows, cols, mk] = np.maximum(
        decay * variances[rows, cols, mk] + alpha32 * d2[rows, cols, mk],
        np.float32(min_variance))

    urows, ucols = np.nonzero(~any_match)
    slot = np.minimum(n_valid[urows, ucols], k_modes - 1)
    weights[urows, ucols, slot] = alpha32
    means[urows, ucols, slot] = frame[urows, ucols]
    variances[urows, ucols, slot] = np.float32(init_variance)

    total = weights.sum(axis=2)
    weights /= total[:, :, None]

    order = np.argsort(-weights, axis=2, kind="stable")
    np.copyto(weights, np.take_along_axis(weights, order, axis=2))
    np.copyto(variances, np.take_along_axis(variances, order, axis=2))
    np.copyto(means, np.take_along_axis(means, order[:, :, :, None], axis=2))
    return fg


@njit(cache=True)
def _gmm_update_scalar(means, variances, weights, frame, alpha, var_threshold,
                       background_ratio, init_variance, min_variance, fg):
    height, width, k_modes, channels = means.shape
    decay = np.float32(1.0) - alpha
    inv_channels = np.float32(1.0) / np.float32(channels)
    scratch = np.empty(channels, dtype=np.float32)
    for r in range(height):
        for c in range(width):
            n_valid = 0
            for k in range(k_modes):
                if weights[r, c, k] > 0:
                    n_valid += 1

            matched = -1
            d2_matched = np.float32(0.0)
            cum = np.float32(0.0)
            matched_is_bg = False
            for k in range(n_valid):
                d2 = np.float32(0.0)
                for ch in range(channels):
                    diff = frame[r, c, ch] - means[r, c, k, ch]
                    d2 += diff * diff
                d2 *= inv_channels
                if d2 < var_threshold * variances[r, c, k]:
                    matched = k
                    d2_matched = d2
                    matched_is_bg = cum <= background_ratio
                    break
                cum += weights[r, c, k]

            fg[r, c] = not (matched >= 0 and matched_is_bg)

            for k in range(k_modes):
                weights[r, c, k] *= decay

            if matched >= 0:
                weights[r, c, matched] += alpha
                for ch in range(channels):
                    means[r, c, matched, ch] += alpha * (
                        frame[r, c, ch] - means[r, c, matched, ch])
                v = decay * variances[r, c, matched] + alpha * d2_matched
                variances[r, c, matched] = max(v, min_variance)
            else:
                slot = n_valid if n_valid < k_modes else k_modes - 1
                weights[r, c, slot] = alpha
                for ch in range(channels):
                    means[r, c, slot, ch] = frame[r, c, ch]
                variances[r, c, slot] = init_variance

            total = np.float32(0.0)
            for k in range(k_modes):
                total += weights[r, c, k]
            for k in range(k_modes):
                weights[r, c, k] /= total

            # stable insertion sort, weight descending
            for k in range(1, k_modes):
                wk = weights[r, c, k]
                vk = variances[r, c, k]
                for ch in range(channels):
                    scratch[ch] = means[r, c, k, ch]
                j = k - 1
                while j >= 0 and weights[r, c, j] < wk:
                    weights[r, c, j + 1] = weights[r, c, j]
                    variances[r, c, j + 1] = variances[r, c, j]
                    for ch in range(channels):
                        means[r, c, j + 1, ch] = means[r, c, j, ch]
                    j -= 1
                weights[r, c, j + 1] = wk
                variances[r, c, j + 1] = vk
                for ch in range(channels):
                    means[r, c, j + 1, ch] = scratch[ch]


def gmm_update_numba(
    means: np.ndarray,
    variances: np.ndarray,
    weights: np.ndarray,
    frame: np.ndarray,
    alpha: float,
    var_threshold: float,
    background_ratio: float,
    init_variance: float,
    min_variance: float,
) -> np.ndarray:
    fg = np.empty(means.shape[:2], dtype=np.bool_)
    _gmm_update_scalar(
        means, variances, weights, frame,
        np.float32(alpha), np.float32(var_threshold),
        np.float32(background_ratio), np.float32(init_variance),
        np.float32(min_variance), fg,
    )
    return fg


def _pure_numpy_requested() -> bool:
    return os.environ.get("SHADOWPIPE_PURE_NUMPY", "0") == "1"


def active_backend() -> str:
    return "numpy" if (_pure_numpy_requested() or not HAS_NUMBA) else "numba"


def gmm_update(*args, **kwargs) -> np.ndarray:
    if active_backend() == "numba":
        return gmm_update_numba(*args, **kwargs)
    return gmm_update_numpy(*args, **kwargs)
