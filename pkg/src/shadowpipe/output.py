"""Training-data exporters: hard YOLO labels, soft labels, review report."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional

from .errors import UnknownClass
from .jsonl import atomic_write_text, write_json, write_jsonl
from .models import FusedLabel, Region


def yolo_line(class_idx: int, region: Region, width: int, height: int) -> str:
    cx = (region.x + region.w / 2) / width
    cy = (region.y + region.h / 2) / height
    return f"{class_idx} {cx:.6f} {cy:.6f} {region.w / width:.6f} {region.h / height:.6f}"


def export_yolo(
    labels_by_image: dict[str, list[FusedLabel]],
    class_index: dict[str, int],
    dims: dict[str, tuple[int, int]],
    out_dir: Path,
) -> list[Path]:
    """One label file per image; images without labels get an empty file."""
    out_dir = Path(out_dir)
    written = []
    for image_id in sorted(labels_by_image):
        width, height = dims[image_id]
        lines = []
        for label in sorted(labels_by_image[image_id], key=lambda l: l.region.key()):
            if label.class_name not in class_index:
                raise UnknownClass(f"class '{label.class_name}' not in class index")
            lines.append(yolo_line(class_index[label.class_name], label.region,
                                   width, height))
        path = out_dir / f"{image_id}.txt"
        atomic_write_text(path, "".join(line + "\n" for line in lines))
        written.append(path)
    return written


def parse_yolo_file(
    path: Path, width: int, height: int
) -> list[tuple[int, float, float, float, float, float]]:
    """Parse one label file back to pixel boxes.

    Returns (class_idx, x, y, w, h, score) tuples; a trailing sixth column
    is read as the score when present, else 1.0.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            idx = int(parts[0])
            cx, cy, nw, nh = (float(v) for v in parts[1:5])
            score = float(parts[5]) if len(parts) > 5 else 1.0
            bw = nw * width
            bh = nh * height
            rows.append((idx, cx * width - bw / 2, cy * height - bh / 2, bw, bh, score))
    return rows


def export_soft(
    labels_by_image: dict[str, list[FusedLabel]],
    out_dir: Path,
) -> list[Path]:
    """Per-image line-delimited records keeping the full contributor list."""
    out_dir = Path(out_dir)
    written = []
    for image_id in sorted(labels_by_image):
        records = [
            label.to_dict()
            for label in sorted(labels_by_image[image_id], key=lambda l: l.region.key())
        ]
        path = out_dir / f"{image_id}.jsonl"
        write_jsonl(path, records)
        written.append(path)
    return written


def make_review_report(
    labels: Iterable[FusedLabel],
    band: tuple[float, float],
    crop_paths: Optional[dict[str, str]] = None,
) -> dict:
    """Images whose best label's probability lands inside [lo, hi].

    These are the ambiguous cases worth a second human look.
    """
    lo, hi = band
    if not (0.0 <= lo <= hi <= 1.0):
        raise ValueError(f"bad review band [{lo}, {hi}]")
    best: dict[str, FusedLabel] = {}
    for label in labels:
        cur = best.get(label.image_id)
        if cur is None or label.combined_prob > cur.combined_prob:
            best[label.image_id] = label
    entries = []
    for image_id in sorted(best):
        label = best[image_id]
        if lo <= label.combined_prob <= hi:
            entry = {
                "image_id": image_id,
                "class_name": label.class_name,
                "combined_prob": label.combined_prob,
                "region": label.region.to_dict(),
            }
            if crop_paths and image_id in crop_paths:
                entry["thumbnail"] = crop_paths[image_id]
            entries.append(entry)
    return {"band": [lo, hi], "count": len(entries), "entries": entries}


def write_review_report(report: dict, json_path: Path, md_path: Path) -> None:
    write_json(json_path, report)
    lines = [
        "# Review queue",
        "",
        f"Probability band: [{report['band'][0]}, {report['band'][1]}] "
        f"- {report['count']} image(s) flagged",
        "",
    ]
    for e in report["entries"]:
        region = e["region"]
        lines.append(
            f"- `{e['image_id']}` {e['class_name']} p={e['combined_prob']:.3f} "
            f"box=({region['x']},{region['y']},{region['w']},{region['h']})"
            + (f" ![thumb]({e['thumbnail']})" if "thumbnail" in e else "")
        )
    atomic_write_text(md_path, "\n".join(lines) + "\n")
