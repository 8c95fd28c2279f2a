"""Small image-array utilities shared by segmentation, dedup, and detection."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError


def load_image(path: Path) -> np.ndarray:
    """Decode to uint8 HxW (grayscale) or HxWx3 (color)."""
    try:
        with Image.open(path) as img:
            if img.mode in ("L", "I;16"):
                return np.asarray(img.convert("L"))
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def save_png(path: Path, array: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path, format="PNG")


def to_grayscale(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        return image
    # ITU-R 601 luma, same weighting Pillow uses for mode L.
    return (image[..., 0] * 0.299 + image[..., 1] * 0.587
            + image[..., 2] * 0.114).astype(image.dtype)


def area_resize(image: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Exact box-filter resize: each output cell is the area-weighted mean of
    the source pixels it overlaps. Works for up- and downscaling."""
    img = image.astype(np.float64)
    in_h, in_w = img.shape[:2]

    def axis_weights(n_in: int, n_out: int) -> np.ndarray:
        # weights[o, i] = overlap of output cell o with input cell i
        scale = n_in / n_out
        weights = np.zeros((n_out, n_in))
        for o in range(n_out):
            lo = o * scale
            hi = (o + 1) * scale
            i0 = int(np.floor(lo))
            i1 = min(n_in, int(np.ceil(hi)))
            for i in range(i0, i1):
                weights[o, i] = min(hi, i + 1) - max(lo, i)
        return weights / scale

    wy = axis_weights(in_h, out_h)
    wx = axis_weights(in_w, out_w)
    if img.ndim == 2:
        return wy @ img @ wx.T
    return np.einsum("oi,ijc,pj->opc", wy, img, wx)
