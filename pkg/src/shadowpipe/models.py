"""Record types flowing between pipeline stages, with JSON round-tripping.

Every type serializes to a plain dict with a fixed key order so that stage
artifacts are byte-stable across runs.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import ValidationError

TS_FMT = "%Y-%m-%dT%H:%M:%S.%f"


def format_ts(t: dt.datetime) -> str:
    return t.strftime(TS_FMT)


def parse_ts(s: str) -> dt.datetime:
    return dt.datetime.strptime(s, TS_FMT)


@dataclass(frozen=True)
class CropFrame:
    """Coordinate frame of a crop cut out of a parent image.

    A point (x, y) in crop pixels maps to
    (offset_x + x / scale, offset_y + y / scale) in the parent image.
    """

    parent_image_id: str
    offset_x: int
    offset_y: int
    scale: float = 1.0

    def to_dict(self) -> dict:
        return {
            "parent_image_id": self.parent_image_id,
            "offset_x": self.offset_x,
            "offset_y": self.offset_y,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CropFrame":
        return cls(d["parent_image_id"], d["offset_x"], d["offset_y"], d["scale"])


@dataclass(frozen=True)
class Region:
    """Axis-aligned pixel box. frame=None means original-image coordinates."""

    x: int
    y: int
    w: int
    h: int
    frame: Optional[CropFrame] = None

    def __post_init__(self):
        if self.w < 1 or self.h < 1 or self.x < 0 or self.y < 0:
            raise ValidationError(
                f"invalid region x={self.x} y={self.y} w={self.w} h={self.h}"
            )

    @property
    def area(self) -> int:
        return self.w * self.h

    def key(self) -> tuple:
        return (self.x, self.y, self.w, self.h)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"x": self.x, "y": self.y, "w": self.w, "h": self.h}
        d["frame"] = self.frame.to_dict() if self.frame is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        frame = CropFrame.from_dict(d["frame"]) if d.get("frame") else None
        return cls(d["x"], d["y"], d["w"], d["h"], frame)


def clamped_region(
    x: float, y: float, w: float, h: float, width: int, height: int,
    frame: Optional[CropFrame] = None,
) -> Optional[Region]:
    """Round a float box to integers and clamp it into a width x height frame.

    Returns None when nothing is left after clamping.
    """
    x0 = max(0, int(round(x)))
    y0 = max(0, int(round(y)))
    x1 = min(width, int(round(x + w)))
    y1 = min(height, int(round(y + h)))
    if x1 - x0 < 1 or y1 - y0 < 1:
        return None
    return Region(x0, y0, x1 - x0, y1 - y0, frame)


@dataclass
class ImageRecord:
    """One source image plus the metadata extracted from it."""

    image_id: str
    path: str
    width: int
    height: int
    captured_at: dt.datetime
    timestamp_source: str  # exif | mtime | synthetic
    colorspace_class: str  # color | grayscale_ir
    day_night: str  # day | night
    keywords: tuple[str, ...] = ()
    camera_serial: Optional[str] = None
    lens_id: Optional[str] = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"{self.image_id}: non-positive dimensions")
        self.keywords = tuple(sorted(self.keywords))

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "path": self.path,
            "width": self.width,
            "height": self.height,
            "captured_at": format_ts(self.captured_at),
            "timestamp_source": self.timestamp_source,
            "colorspace_class": self.colorspace_class,
            "day_night": self.day_night,
            "keywords": list(self.keywords),
            "camera_serial": self.camera_serial,
            "lens_id": self.lens_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRecord":
        return cls(
            image_id=d["image_id"],
            path=d["path"],
            width=d["width"],
            height=d["height"],
            captured_at=parse_ts(d["captured_at"]),
            timestamp_source=d["timestamp_source"],
            colorspace_class=d["colorspace_class"],
            day_night=d["day_night"],
            keywords=tuple(d.get("keywords", [])),
            camera_serial=d.get("camera_serial"),
            lens_id=d.get("lens_id"),
        )


@dataclass
class Batch:
    """Time-correlated run of images, members ordered by capture time."""

    batch_id: str
    member_ids: list[str]
    span: tuple[dt.datetime, dt.datetime]

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "member_ids": list(self.member_ids),
            "span": [format_ts(self.span[0]), format_ts(self.span[1])],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Batch":
        return cls(
            d["batch_id"],
            list(d["member_ids"]),
            (parse_ts(d["span"][0]), parse_ts(d["span"][1])),
        )


def top_class_of(class_probs: dict[str, float]) -> str:
    """Argmax class name; ties broken lexicographically."""
    if not class_probs:
        raise ValidationError("empty class_probs")
    best = max(sorted(class_probs), key=lambda c: class_probs[c])
    return best


@dataclass
class Detection:
    """A soft decision from one source: a box plus per-class probabilities."""

    detection_id: str
    source: str  # "detector:<model_id>" | "segmenter:<kind>" | "crowd"
    subject: str  # image_id or crop_id
    subject_kind: str  # image | crop
    region: Region
    class_probs: dict[str, float]
    top_class: str = ""
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for cls_name, p in self.class_probs.items():
            if not (0.0 <= p <= 1.0):
                raise ValidationError(
                    f"{self.detection_id}: probability {p} for class "
                    f"'{cls_name}' outside [0, 1]"
                )
        if not self.top_class:
            self.top_class = top_class_of(self.class_probs)

    @property
    def source_kind(self) -> str:
        return self.source.split(":", 1)[0]

    def to_dict(self) -> dict:
        return {
            "detection_id": self.detection_id,
            "source": self.source,
            "subject": self.subject,
            "subject_kind": self.subject_kind,
            "region": self.region.to_dict(),
            "class_probs": {k: self.class_probs[k] for k in sorted(self.class_probs)},
            "top_class": self.top_class,
            "provenance": {k: self.provenance[k] for k in sorted(self.provenance)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        return cls(
            detection_id=d["detection_id"],
            source=d["source"],
            subject=d["subject"],
            subject_kind=d["subject_kind"],
            region=Region.from_dict(d["region"]),
            class_probs=dict(d["class_probs"]),
            top_class=d.get("top_class", ""),
            provenance=dict(d.get("provenance", {})),
        )


@dataclass
class CropInfo:
    """Bookkeeping for one crop file emitted by segmentation."""

    crop_id: str
    parent_image_id: str
    path: str
    offset_x: int
    offset_y: int
    scale: float
    width: int
    height: int
    source: str  # segmenter kind that produced the region

    @property
    def frame(self) -> CropFrame:
        return CropFrame(self.parent_image_id, self.offset_x, self.offset_y, self.scale)

    def to_dict(self) -> dict:
        return {
            "crop_id": self.crop_id,
            "parent_image_id": self.parent_image_id,
            "path": self.path,
            "offset_x": self.offset_x,
            "offset_y": self.offset_y,
            "scale": self.scale,
            "width": self.width,
            "height": self.height,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CropInfo":
        return cls(
            d["crop_id"], d["parent_image_id"], d["path"], d["offset_x"],
            d["offset_y"], d["scale"], d["width"], d["height"], d["source"],
        )


@dataclass
class DedupGroup:
    """Near-duplicate crops treated as one unit for human review."""

    group_id: str
    representative: str
    members: list[str]
    hash_bits: int

    def __post_init__(self):
        if self.representative not in self.members:
            raise ValidationError(f"{self.group_id}: representative not a member")

    def to_dict(self) -> dict:
        return {
            "group_id": self.group_id,
            "representative": self.representative,
            "members": list(self.members),
            "hash_bits": f"{self.hash_bits:016x}",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DedupGroup":
        return cls(
            d["group_id"], d["representative"], list(d["members"]),
            int(d["hash_bits"], 16),
        )


@dataclass
class VoteTask:
    task_id: str
    crop_id: str
    image_ref: str
    choices: list[str]
    min_votes: int = 3

    def __post_init__(self):
        if self.choices.count("nothing") != 1 or len(self.choices) < 2:
            raise ValidationError(
                f"{self.task_id}: choices need exactly one 'nothing' plus "
                f"at least one real class"
            )

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "crop_id": self.crop_id,
            "image_ref": self.image_ref,
            "choices": list(self.choices),
            "min_votes": self.min_votes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VoteTask":
        return cls(d["task_id"], d["crop_id"], d["image_ref"], list(d["choices"]),
                   d["min_votes"])


@dataclass
class VoteTally:
    """Aggregated votes on one task."""

    task_id: str
    counts: dict[str, int]
    min_votes: int

    @property
    def total_votes(self) -> int:
        return sum(self.counts.values())

    @property
    def complete(self) -> bool:
        return self.total_votes >= self.min_votes

    @property
    def fractions(self) -> dict[str, float]:
        total = self.total_votes
        if total == 0:
            return {}
        return {c: self.counts[c] / total for c in sorted(self.counts)}

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "counts": {c: self.counts[c] for c in sorted(self.counts)},
            "min_votes": self.min_votes,
            "total_votes": self.total_votes,
            "complete": self.complete,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VoteTally":
        return cls(d["task_id"], dict(d["counts"]), d["min_votes"])


@dataclass
class FusedLabel:
    """Final per-region decision after weighted fusion."""

    image_id: str
    region: Region
    class_name: str
    combined_prob: float
    contributors: list[dict]  # {source, value, weight}

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "region": self.region.to_dict(),
            "class_name": self.class_name,
            "combined_prob": self.combined_prob,
            "contributors": list(self.contributors),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusedLabel":
        return cls(
            d["image_id"], Region.from_dict(d["region"]), d["class_name"],
            d["combined_prob"], list(d["contributors"]),
        )


@dataclass(frozen=True)
class CameraProfile:
    """Brown-Conrady lens model for one camera body."""

    camera_serial: str
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    cx: float = 0.0
    cy: float = 0.0
    fx: float = 1.0
    fy: float = 1.0

    @property
    def is_identity(self) -> bool:
        return self.k1 == self.k2 == self.p1 == self.p2 == 0.0

    @classmethod
    def identity(cls, serial: str = "*") -> "CameraProfile":
        return cls(camera_serial=serial)

    @classmethod
    def from_dict(cls, serial: str, d: dict) -> "CameraProfile":
        return cls(
            camera_serial=serial,
            k1=d.get("k1", 0.0), k2=d.get("k2", 0.0),
            p1=d.get("p1", 0.0), p2=d.get("p2", 0.0),
            cx=d.get("cx", 0.0), cy=d.get("cy", 0.0),
            fx=d.get("fx", 1.0), fy=d.get("fy", 1.0),
        )
