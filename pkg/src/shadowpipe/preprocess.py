"""Lens-distortion correction keyed by camera serial number."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .errors import MissingProfile
from .jsonl import read_json
from .models import CameraProfile


def load_profiles(path: Path) -> dict[str, CameraProfile]:
    doc = read_json(path)
    return {serial: CameraProfile.from_dict(serial, d) for serial, d in doc.items()}


def profile_for(
    profiles: dict[str, CameraProfile],
    camera_serial: Optional[str],
    strict: bool = False,
) -> CameraProfile:
    """Pick the profile for a serial; '*' acts as the wildcard entry."""
    if camera_serial and camera_serial in profiles:
        return profiles[camera_serial]
    if "*" in profiles:
        return profiles["*"]
    if strict:
        raise MissingProfile(f"no camera profile for serial '{camera_serial}'")
    return CameraProfile.identity()


def distort_points(profile: CameraProfile, x: np.ndarray, y: np.ndarray):
    """Forward Brown-Conrady model: ideal pixel coords -> distorted coords."""
    xn = (x - profile.cx) / profile.fx
    yn = (y - profile.cy) / profile.fy
    r2 = xn * xn + yn * yn
    radial = 1.0 + profile.k1 * r2 + profile.k2 * r2 * r2
    xd = xn * radial + 2 * profile.p1 * xn * yn + profile.p2 * (r2 + 2 * xn * xn)
    yd = yn * radial + profile.p1 * (r2 + 2 * yn * yn) + 2 * profile.p2 * xn * yn
    return xd * profile.fx + profile.cx, yd * profile.fy + profile.cy


def undistort(image: np.ndarray, profile: CameraProfile) -> np.ndarray:
    """Undo lens distortion with bilinear resampling; dimensions are kept.

    The identity profile returns the input array untouched, so pass-through
    configurations stay bit-identical.
    """
    if profile.is_identity:
        return image
    height, width = image.shape[:2]
    ys, xs = np.meshgrid(np.arange(height, dtype=np.float64),
                         np.arange(width, dtype=np.float64), indexing="ij")
    src_x, src_y = distort_points(profile, xs, ys)

    x0 = np.clip(np.floor(src_x).astype(np.int64), 0, width - 1)
    y0 = np.clip(np.floor(src_y).astype(np.int64), 0, height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = np.clip(src_x - x0, 0.0, 1.0)
    fy = np.clip(src_y - y0, 0.0, 1.0)

    img = image.astype(np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    fx = fx[:, :, None]
    fy = fy[:, :, None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bottom * fy
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    if image.ndim == 2:
        out = out[:, :, 0]
    return out
