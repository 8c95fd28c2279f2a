"""Detection scoring: IoU, greedy matching at a threshold, and the metrics.

Boxes are half-open pixel rectangles: a Region (x, y, w, h) covers the
w*h pixels with coordinates in [x, x+w) x [y, y+h).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .models import ImageRecord, Region


def intersection_area(a: Region, b: Region) -> int:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def iou(a: Region, b: Region) -> float:
    """Jaccard index of two boxes on pixel areas; 0 when disjoint."""
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    union = a.area + b.area - inter
    return inter / union


def iou_exact(a: Region, b: Region) -> Fraction:
    """Rational-arithmetic IoU, used where exactness matters."""
    inter = intersection_area(a, b)
    if inter == 0:
        return Fraction(0)
    return Fraction(inter, a.area + b.area - inter)


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: list[tuple[int, int]]  # (pred index, truth index)


def match_detections(
    preds: Sequence[tuple[Region, float]],
    truths: Sequence[Region],
    alpha: float,
) -> MatchResult:
    """Greedy one-to-one matching of predictions to ground truth.

    Predictions are visited in descending score order and each takes the
    unmatched truth with the highest IoU, provided it reaches alpha.
    Deterministic: score ties fall back to box coordinates, IoU ties to the
    lowest truth index.
    """
    order = sorted(
        range(len(preds)),
        key=lambda i: (-preds[i][1], preds[i][0].key(), i),
    )
    taken = [False] * len(truths)
    pairs: list[tuple[int, int]] = []
    for pi in order:
        region = preds[pi][0]
        best_j = -1
        best_iou = 0.0
        for j, truth in enumerate(truths):
            if taken[j]:
                continue
            v = iou(region, truth)
            if v >= alpha and v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            pairs.append((pi, best_j))
    tp = len(pairs)
    return MatchResult(tp=tp, fp=len(preds) - tp, fn=len(truths) - tp,
                       pairs=sorted(pairs))


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float = field(init=False)
    recall: float = field(init=False)
    f1: float = field(init=False)
    sub_reports: dict[str, "EvalReport"] = field(default_factory=dict)

    def __post_init__(self):
        self.precision = self.tp / (self.tp + self.fp) if self.tp + self.fp > 0 else 0.0
        self.recall = self.tp / (self.tp + self.fn) if self.tp + self.fn > 0 else 0.0
        if self.precision + self.recall > 0:
            self.f1 = 2 * self.precision * self.recall / (self.precision + self.recall)
        else:
            self.f1 = 0.0

    def to_dict(self) -> dict:
        d = {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "f1": round(self.f1, 6),
        }
        if self.sub_reports:
            d["conditions"] = {k: v.to_dict() for k, v in sorted(self.sub_reports.items())}
        return d


def compute_report(tp: int, fp: int, fn: int) -> EvalReport:
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    return EvalReport(tp=tp, fp=fp, fn=fn)


def record_matches_filter(record: ImageRecord, flt: str) -> bool:
    """Filter syntax: 'day', 'night', or 'keyword=<k>'."""
    if flt in ("day", "night"):
        return record.day_night == flt
    if flt.startswith("keyword="):
        return flt.split("=", 1)[1] in record.keywords
    raise ValueError(f"unknown filter '{flt}'")


def evaluate_images(
    per_image: dict[str, tuple[list[tuple[Region, float]], list[Region]]],
    alpha: float,
    records: Optional[dict[str, ImageRecord]] = None,
    filters: Iterable[str] = (),
) -> EvalReport:
    """Score per-image (preds, truths) pairs and attach filtered breakdowns."""

    def tally(image_ids: Iterable[str]) -> tuple[int, int, int]:
        tp = fp = fn = 0
        for image_id in image_ids:
            preds, truths = per_image[image_id]
            m = match_detections(preds, truths, alpha)
            tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
        return tp, fp, fn

    report = compute_report(*tally(sorted(per_image)))
    for flt in filters:
        if records is None:
            raise ValueError("filters need stage-1 image records")
        subset = [
            i for i in sorted(per_image)
            if i in records and record_matches_filter(records[i], flt)
        ]
        report.sub_reports[flt] = compute_report(*tally(subset))
    return report


def load_label_dir(
    label_dir: Path,
    dims: Optional[dict[str, tuple[int, int]]] = None,
) -> dict[str, list[tuple[Region, float]]]:
    """Read a directory tree of YOLO-style label files.

    Keys are label paths relative to label_dir without the .txt suffix.
    Without dims, boxes are scaled into a common 10000 px frame, which
    leaves IoU unchanged for same-image comparisons.
    """
    from .output import parse_yolo_file  # local import to avoid a cycle

    out: dict[str, list[tuple[Region, float]]] = {}
    for path in sorted(label_dir.rglob("*.txt")):
        image_id = path.relative_to(label_dir).with_suffix("").as_posix()
        width, height = (dims or {}).get(image_id, (10000, 10000))
        boxes = []
        for _, bx, by, bw, bh, score in parse_yolo_file(path, width, height):
            region = Region(
                max(0, int(round(bx))), max(0, int(round(by))),
                max(1, int(round(bw))), max(1, int(round(bh))),
            )
            boxes.append((region, score))
        out[image_id] = boxes
    return out
