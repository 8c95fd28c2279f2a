"""Background-subtraction segmenters emitting candidate motion regions.

Two segmenters share one postprocessing path: the per-pixel mixture model
(see kernels.py) and a mean-image differencer. Masks are cleaned with one
erode and two dilate passes (3x3), 8-connected components above a minimum
area become regions, padded and clamped to the frame. Segmentation runs on
a copy downscaled to a configurable long side; emitted regions are rescaled
to original coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .kernels import gmm_update, make_gmm_state
from .models import CropFrame, Region, clamped_region
from .raster import area_resize, to_grayscale

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class Mog2Params:
    k_modes: int = 5
    alpha: Optional[float] = None  # default 1 / min(batch_len, 100)
    var_threshold: float = 16.0
    background_ratio: float = 0.9
    init_variance: float = 225.0  # 15^2
    min_variance: float = 4.0
    burn_in: Optional[int] = None  # default ceil(1 / alpha)
    min_area_frac: float = 0.0005
    pad_px: int = 10
    work_long_side: int = 960
    color: bool = False


@dataclass
class ImgDiffParams:
    diff_threshold: float = 25.0
    min_area_frac: float = 0.0005
    pad_px: int = 10
    work_long_side: int = 960


def _work_scale(width: int, height: int, work_long_side: int) -> float:
    long_side = max(width, height)
    if work_long_side and long_side > work_long_side:
        return work_long_side / long_side
    return 1.0


def _prepare(frame: np.ndarray, scale: float, color: bool) -> np.ndarray:
    """Downscale and shape a frame to float32 (H, W, C) for the kernel."""
    arr = frame
    if not color:
        arr = to_grayscale(arr)
    if scale != 1.0:
        out_h = max(1, int(round(arr.shape[0] * scale)))
        out_w = max(1, int(round(arr.shape[1] * scale)))
        arr = area_resize(arr, out_w, out_h)
    arr = arr.astype(np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def mask_to_regions(
    mask: np.ndarray,
    min_area: float,
    pad_px: int,
    scale: float,
    orig_size: tuple[int, int],
) -> list[Region]:
    """Cleaned mask -> padded boxes in original-image coordinates."""
    cleaned = ndimage.binary_erosion(mask, structure=EIGHT_CONNECTED)
    cleaned = ndimage.binary_dilation(cleaned, structure=EIGHT_CONNECTED,
                                      iterations=2)
    labels, count = ndimage.label(cleaned, structure=EIGHT_CONNECTED)
    if count == 0:
        return []
    areas = np.bincount(labels.ravel())
    regions = []
    for idx, slc in enumerate(ndimage.find_objects(labels), start=1):
        if slc is None or areas[idx] < min_area:
            continue
        y0, y1 = slc[0].start, slc[0].stop
        x0, x1 = slc[1].start, slc[1].stop
        region = clamped_region(
            x0 / scale - pad_px, y0 / scale - pad_px,
            (x1 - x0) / scale + 2 * pad_px, (y1 - y0) / scale + 2 * pad_px,
            orig_size[0], orig_size[1],
        )
        if region is not None:
            regions.append(region)
    regions.sort(key=lambda r: r.key())
    return regions


def segment_mog2(
    frames: Sequence[tuple[str, np.ndarray]],
    params: Mog2Params = Mog2Params(),
    collect_masks: Optional[list] = None,
) -> list[tuple[str, list[Region]]]:
    """Run the mixture model over one batch of frames.

    Frames whose dimensions differ from the first frame are skipped with an
    empty result. Regions from the burn-in window are suppressed: the model
    starts empty and would flag whole frames.
    """
    if not frames:
        return []
    first = frames[0][1]
    orig_h, orig_w = first.shape[:2]
    scale = _work_scale(orig_w, orig_h, params.work_long_side)
    alpha = params.alpha if params.alpha else 1.0 / min(len(frames), 100)
    burn_in = params.burn_in if params.burn_in is not None else math.ceil(1.0 / alpha)

    state = None
    results: list[tuple[str, list[Region]]] = []
    for idx, (image_id, frame) in enumerate(frames):
        if frame.shape[:2] != (orig_h, orig_w):
            results.append((image_id, []))  # SkipImage: dimension mismatch
            continue
        work = _prepare(frame, scale, params.color)
        if state is None:
            state = make_gmm_state(work.shape[0], work.shape[1],
                                   params.k_modes, work.shape[2])
        means, variances, weights = state
        fg = gmm_update(
            means, variances, weights, work, alpha, params.var_threshold,
            params.background_ratio, params.init_variance, params.min_variance,
        )
        if collect_masks is not None:
            collect_masks.append(fg.copy())
        if idx < burn_in:
            results.append((image_id, []))
            continue
        min_area = params.min_area_frac * fg.shape[0] * fg.shape[1]
        results.append((image_id, mask_to_regions(
            fg, min_area, params.pad_px, scale, (orig_w, orig_h))))
    return results


def segment_imgdiff(
    frames: Sequence[tuple[str, np.ndarray]],
    params: ImgDiffParams = ImgDiffParams(),
    collect_masks: Optional[list] = None,
) -> list[tuple[str, list[Region]]]:
    """Difference each frame against the batch mean image."""
    if not frames:
        return []
    first = frames[0][1]
    orig_h, orig_w = first.shape[:2]
    scale = _work_scale(orig_w, orig_h, params.work_long_side)

    prepared: list[tuple[str, Optional[np.ndarray]]] = []
    for image_id, frame in frames:
        if frame.shape[:2] != (orig_h, orig_w):
            prepared.append((image_id, None))  # SkipImage
            continue
        prepared.append((image_id, _prepare(frame, scale, color=False)[:, :, 0]))

    stack = [w for _, w in prepared if w is not None]
    mean_image = np.mean(stack, axis=0)

    results = []
    for image_id, work in prepared:
        if work is None:
            results.append((image_id, []))
            continue
        mask = np.abs(work - mean_image) > params.diff_threshold
        if collect_masks is not None:
            collect_masks.append(mask.copy())
        min_area = params.min_area_frac * mask.shape[0] * mask.shape[1]
        results.append((image_id, mask_to_regions(
            mask, min_area, params.pad_px, scale, (orig_w, orig_h))))
    return results


def extract_crops(
    image: np.ndarray,
    image_id: str,
    regions: Iterable[Region],
    target_long_side: Optional[int] = None,
) -> list[tuple[np.ndarray, Region]]:
    """Cut regions out of an image, optionally downscaling large crops.

    Each returned region lives in the crop's own frame and records the
    parent offset and scale needed to map detections back later.
    """
    out = []
    height, width = image.shape[:2]
    for region in regions:
        if region.x + region.w > width or region.y + region.h > height:
            raise ValueError(f"region {region.key()} exceeds image bounds")
        crop = image[region.y:region.y + region.h, region.x:region.x + region.w]
        scale = 1.0
        long_side = max(region.w, region.h)
        if target_long_side and long_side > target_long_side:
            scale = target_long_side / long_side
            out_w = max(1, int(round(region.w * scale)))
            out_h = max(1, int(round(region.h * scale)))
            crop = np.clip(np.rint(area_resize(crop, out_w, out_h)),
                           0, 255).astype(np.uint8)
        else:
            crop = crop.copy()
        frame = CropFrame(image_id, region.x, region.y, scale)
        out.append((crop, Region(0, 0, crop.shape[1], crop.shape[0], frame)))
    return out
