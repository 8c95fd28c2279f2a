"""Backmapping crop detections to source images and fusing per-region decisions.

Fusion is a weighted arithmetic mean over sources: each configured source i
carries weight w_i with sum(w_i) = 1, every probability lies in [0, 1], and
the combined value per class c is sum_i w_i * d_{c,i}. Sources absent from a
cluster renormalize the remaining weights; a source contributing n boxes to
one cluster splits its weight n ways.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import OrphanCrop, RangeError, WeightError
from .evaluate import iou
from .models import CropInfo, DedupGroup, Detection, FusedLabel, Region, clamped_region

WEIGHT_TOL = 1e-9

# Detection.source prefix -> weight key in the decision-stage config.
SOURCE_WEIGHT_KEYS = {
    "detector": "detection",
    "crowd": "evaluation",
    "segmenter": "segmentation",
}


def check_weights(weights: dict[str, float]) -> None:
    for key, w in weights.items():
        if not (0.0 <= w <= 1.0):
            raise WeightError(f"weight for '{key}' outside [0, 1]: {w}")
    total = sum(weights.values())
    if abs(total - 1.0) > WEIGHT_TOL:
        raise WeightError(f"weights sum to {total}, expected 1")


def backmap_region(region: Region, crop: CropInfo,
                   parent_size: tuple[int, int]) -> Optional[Region]:
    """Crop-local box -> parent-image box: undo the crop offset and scale."""
    x = crop.offset_x + region.x / crop.scale
    y = crop.offset_y + region.y / crop.scale
    w = region.w / crop.scale
    h = region.h / crop.scale
    return clamped_region(x, y, w, h, parent_size[0], parent_size[1])


def backmap(
    detections: Iterable[Detection],
    groups: Iterable[DedupGroup],
    crops: dict[str, CropInfo],
    image_sizes: dict[str, tuple[int, int]],
) -> list[Detection]:
    """Map detections into original-image coordinates, expanding dedup groups.

    A detection on a crop is re-issued for every member of that crop's group,
    each transformed through the member's own offset and scale. Full-frame
    detections pass through untouched.
    """
    group_of: dict[str, DedupGroup] = {}
    for group in groups:
        for member in group.members:
            group_of[member] = group

    out: list[Detection] = []
    for det in detections:
        if det.subject_kind == "image":
            out.append(det)
            continue
        if det.subject not in crops:
            raise OrphanCrop(f"detection {det.detection_id} references unknown "
                             f"crop '{det.subject}'")
        group = group_of.get(det.subject)
        member_ids = group.members if group else [det.subject]
        for member_id in member_ids:
            crop = crops[member_id]
            parent = crop.parent_image_id
            region = backmap_region(det.region, crop, image_sizes[parent])
            if region is None:
                continue
            provenance = dict(det.provenance)
            provenance["crop_id"] = det.subject
            if group:
                provenance["group_id"] = group.group_id
            if member_id != det.subject:
                provenance["via_member"] = member_id
            out.append(Detection(
                detection_id=f"{det.detection_id}@{member_id}",
                source=det.source,
                subject=parent,
                subject_kind="image",
                region=region,
                class_probs=dict(det.class_probs),
                top_class=det.top_class,
                provenance=provenance,
            ))
    out.sort(key=lambda d: (d.subject, d.region.key(), d.source, d.detection_id))
    return out


@dataclass
class Cluster:
    region: Region  # tight bounding box over all members
    members: list[Detection]


def _union_box(a: Region, b: Region) -> Region:
    x0 = min(a.x, b.x)
    y0 = min(a.y, b.y)
    x1 = max(a.x + a.w, b.x + b.w)
    y1 = max(a.y + a.h, b.y + b.h)
    return Region(x0, y0, x1 - x0, y1 - y0)


def merge_regions(detections: list[Detection], merge_iou: float) -> list[Cluster]:
    """Greedy agglomeration: repeatedly merge the highest-IoU cluster pair.

    Stops when no pair reaches merge_iou. Cluster boxes grow to the union of
    their members, so chained overlaps can pull in more boxes as they merge.
    """
    clusters = [
        Cluster(det.region, [det])
        for det in sorted(detections, key=lambda d: (d.region.key(), d.source,
                                                     d.detection_id))
    ]
    while len(clusters) > 1:
        best = (0.0, -1, -1)
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                v = iou(clusters[i].region, clusters[j].region)
                if v > best[0]:
                    best = (v, i, j)
        if best[0] < merge_iou or best[1] < 0:
            break
        _, i, j = best
        merged = Cluster(
            _union_box(clusters[i].region, clusters[j].region),
            clusters[i].members + clusters[j].members,
        )
        clusters = [c for k, c in enumerate(clusters) if k not in (i, j)]
        clusters.append(merged)
        clusters.sort(key=lambda c: c.region.key())
    return clusters


def fuse_cluster(
    cluster: Cluster,
    weights: dict[str, float],
    image_id: str = "",
    mode: str = "top_class",
) -> FusedLabel:
    """Weighted-mean fusion of one cluster's detections into a single label.

    mode="top_class" lets each detection speak only for its argmax class;
    mode="all_classes" fuses every class in each detection's map.
    """
    check_weights(weights)
    for det in cluster.members:
        for cls_name, p in det.class_probs.items():
            if not (0.0 <= p <= 1.0):
                raise RangeError(
                    f"{det.detection_id}: probability {p} for '{cls_name}'")

    by_kind: dict[str, list[Detection]] = {}
    for det in cluster.members:
        if not det.class_probs:
            continue
        key = SOURCE_WEIGHT_KEYS.get(det.source_kind, det.source_kind)
        by_kind.setdefault(key, []).append(det)
    if not by_kind:
        raise WeightError("cluster has no detections with class probabilities")
    for key in by_kind:
        if key not in weights:
            raise WeightError(f"no weight configured for source '{key}'")

    present_total = sum(weights[k] for k in by_kind)
    weighted: list[tuple[Detection, float]] = []
    for key, dets in sorted(by_kind.items()):
        weight_each = weights[key] / present_total / len(dets)
        weighted.extend((det, weight_each) for det in dets)

    def value_for(det: Detection, cls_name: str) -> float:
        if mode == "top_class":
            # each detection speaks only for its argmax class
            return det.class_probs[cls_name] if cls_name == det.top_class else 0.0
        return det.class_probs.get(cls_name, 0.0)

    if mode == "top_class":
        candidates = sorted({det.top_class for det, _ in weighted})
    else:
        candidates = sorted({c for det, _ in weighted for c in det.class_probs})
    fused = {
        cls_name: sum(w * value_for(det, cls_name) for det, w in weighted)
        for cls_name in candidates
    }
    winner = max(candidates, key=lambda c: fused[c])
    # every present source appears, zero-valued or not, so the recorded
    # weights always sum to 1 and combined_prob is their exact weighted mean
    contributors = [
        {"source": det.source, "value": value_for(det, winner), "weight": w}
        for det, w in weighted
    ]
    return FusedLabel(
        image_id=image_id,
        region=cluster.region,
        class_name=winner,
        combined_prob=fused[winner],
        contributors=contributors,
    )


def apply_threshold(
    labels: Iterable[FusedLabel], threshold: float
) -> tuple[list[FusedLabel], list[FusedLabel]]:
    """Split fused labels into hard decisions (prob >= threshold) and the rest."""
    hard: list[FusedLabel] = []
    soft_only: list[FusedLabel] = []
    for label in labels:
        (hard if label.combined_prob >= threshold else soft_only).append(label)
    return hard, soft_only


def fuse_image(
    image_id: str,
    detections: list[Detection],
    weights: dict[str, float],
    merge_iou: float = 0.5,
    mode: str = "top_class",
) -> list[FusedLabel]:
    """Cluster one image's backmapped detections and fuse each cluster."""
    prob_bearing = [d for d in detections if d.class_probs]
    labels = [
        fuse_cluster(c, weights, image_id=image_id, mode=mode)
        for c in merge_regions(prob_bearing, merge_iou)
    ]
    labels.sort(key=lambda l: l.region.key())
    return labels
