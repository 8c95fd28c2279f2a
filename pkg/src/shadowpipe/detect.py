"""External-detector integration over a process-boundary wire protocol.

The adapter contract keeps the pipeline neutral to detector frameworks: any
executable that reads request lines on stdin and writes response lines on
stdout can serve as the detector. A deterministic mock detector ships for
tests and desk-scale runs.

Wire format (line-delimited JSON over standard streams):
    request   {"id": str, "path": str}
    response  {"id": str, "boxes": [{"x": int, "y": int, "w": int, "h": int,
                                     "probs": {class: float}}]}
One response line per request id, order-preserving; the adapter signals
completion by closing its output.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import AdapterCrash, ProtocolError, ValidationError
from .models import CropFrame, Detection, Region, top_class_of

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

MOCK_BRIGHTNESS_THRESHOLD = 200
MOCK_MIN_AREA = 100


@dataclass(frozen=True)
class ManifestEntry:
    """One image or crop to hand to the adapter."""

    subject_id: str  # request id on the wire
    path: str
    width: int
    height: int
    subject_kind: str = "image"  # image | crop
    frame: Optional[CropFrame] = None


def request_line(entry: ManifestEntry) -> str:
    return json.dumps({"id": entry.subject_id, "path": entry.path},
                      separators=(", ", ": "))


def parse_response_line(line: str, line_no: int) -> tuple[str, list[dict]]:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"not valid JSON: {exc}", line_no) from exc
    if not isinstance(doc, dict) or "id" not in doc or "boxes" not in doc:
        raise ProtocolError("response needs 'id' and 'boxes'", line_no)
    if not isinstance(doc["boxes"], list):
        raise ProtocolError("'boxes' must be a list", line_no)
    return doc["id"], doc["boxes"]


def validate_box(
    box: dict, entry: ManifestEntry, classes: Sequence[str], line_no: int
) -> tuple[Region, dict[str, float]]:
    for key in ("x", "y", "w", "h", "probs"):
        if key not in box:
            raise ProtocolError(f"box missing '{key}'", line_no)
    probs = box["probs"]
    for cls_name, p in probs.items():
        if cls_name not in classes:
            raise ValidationError(
                f"line {line_no}: unknown class '{cls_name}' from adapter")
        if not (0.0 <= p <= 1.0):
            raise ValidationError(
                f"line {line_no}: probability {p} for '{cls_name}' outside "
                f"the closed interval [0, 1]")
    x, y, w, h = box["x"], box["y"], box["w"], box["h"]
    if x < 0 or y < 0 or w < 1 or h < 1 or x + w > entry.width \
            or y + h > entry.height:
        raise ValidationError(
            f"line {line_no}: box ({x},{y},{w},{h}) out of bounds for "
            f"{entry.subject_id} ({entry.width}x{entry.height})")
    return Region(x, y, w, h, entry.frame), dict(probs)


def _run_adapter_batch(
    chunk: Sequence[ManifestEntry],
    adapter: Sequence[str],
    classes: Sequence[str],
    model_id: str,
    first_line_no: int,
) -> list[Detection]:
    request = "".join(request_line(e) + "\n" for e in chunk)
    proc = subprocess.run(
        list(adapter), input=request.encode("utf-8"),
        stdout=subprocess.PIPE, stderr=subprocess.PIPE,
    )
    if proc.returncode != 0:
        raise AdapterCrash(
            f"adapter exited {proc.returncode}: "
            f"{proc.stderr.decode('utf-8', 'replace').strip()[:500]}")
    lines = [line for line in proc.stdout.decode("utf-8").splitlines()
             if line.strip()]
    if len(lines) != len(chunk):
        raise ProtocolError(
            f"expected {len(chunk)} response lines, got {len(lines)}")
    detections: list[Detection] = []
    by_id = {e.subject_id: e for e in chunk}
    for offset, line in enumerate(lines):
        line_no = first_line_no + offset
        rid, boxes = parse_response_line(line, line_no)
        if rid != chunk[offset].subject_id:
            raise ProtocolError(
                f"response id '{rid}' out of order "
                f"(expected '{chunk[offset].subject_id}')", line_no)
        entry = by_id[rid]
        for box_no, box in enumerate(boxes):
            region, probs = validate_box(box, entry, classes, line_no)
            detections.append(Detection(
                detection_id=f"det_{entry.subject_id}_{box_no}",
                source=f"detector:{model_id}",
                subject=entry.subject_id,
                subject_kind=entry.subject_kind,
                region=region,
                class_probs=probs,
            ))
    return detections


def run_detector(
    manifest: Sequence[ManifestEntry],
    adapter: Sequence[str],
    classes: Sequence[str],
    model_id: str = "adapter",
    batch_size: int = 64,
    workers: int = 1,
) -> list[Detection]:
    """Feed the manifest through the adapter in batches and validate output.

    Per detection the full class map is preserved in the artifact while the
    argmax class drives downstream fusion. With workers > 1, that many
    adapter processes run over disjoint manifest shards; results merge in
    manifest order either way, so the output is identical.
    """
    if not manifest:
        return []
    chunks = [
        (manifest[start:start + batch_size], start + 1)
        for start in range(0, len(manifest), batch_size)
    ]
    if workers <= 1 or len(chunks) == 1:
        results = [
            _run_adapter_batch(chunk, adapter, classes, model_id, line_no)
            for chunk, line_no in chunks
        ]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda item: _run_adapter_batch(
                    item[0], adapter, classes, model_id, item[1]),
                chunks))
    return [det for batch in results for det in batch]


def mock_detect(image: np.ndarray) -> list[Detection]:
    """Deterministic stand-in for a trained detector.

    Finds connected regions brighter than 200/255 with area >= 100 px and
    scores them 0.5 + 0.4 * (mean brightness - 200) / 55, clamped to
    [0.5, 0.9]. Output is sorted by (y, x).
    """
    gray = image if image.ndim == 2 else (
        image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114)
    gray = gray.astype(np.float64)
    mask = gray > MOCK_BRIGHTNESS_THRESHOLD
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    boxes = []
    for idx, slc in enumerate(ndimage.find_objects(labels), start=1):
        if slc is None:
            continue
        component = labels[slc] == idx
        area = int(component.sum())
        if area < MOCK_MIN_AREA:
            continue
        mean_brightness = float(gray[slc][component].mean())
        p = 0.5 + 0.4 * (mean_brightness - MOCK_BRIGHTNESS_THRESHOLD) / 55.0
        p = min(0.9, max(0.5, p))
        boxes.append((slc[0].start, slc[1].start,
                      slc[1].stop - slc[1].start, slc[0].stop - slc[0].start, p))
    boxes.sort(key=lambda b: (b[0], b[1]))
    detections = []
    for n, (y, x, w, h, p) in enumerate(boxes):
        probs = {"target": round(p, 6), "background": round(1.0 - p, 6)}
        detections.append(Detection(
            detection_id=f"mock_{n}",
            source="detector:mock",
            subject="",
            subject_kind="image",
            region=Region(x, y, w, h),
            class_probs=probs,
            top_class=top_class_of(probs),
        ))
    return detections
