"""Image metadata extraction and time-correlated batching.

Capture times prefer EXIF over filesystem attributes; an image with no EXIF
timestamp falls back to its mtime and is flagged accordingly. Camera bursts
become batches wherever the gap between consecutive images stays within the
configured threshold.
"""

from __future__ import annotations

import datetime as dt
import re
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, IptcImagePlugin, UnidentifiedImageError

from .errors import DecodeError, EmptyDirectory
from .models import Batch, ImageRecord

EXIF_DATETIME = 306
EXIF_MODEL = 0x0110
EXIF_IFD = 0x8769
EXIF_DATETIME_ORIGINAL = 36867
EXIF_DATETIME_DIGITIZED = 36868
EXIF_SUBSEC = 37520
EXIF_SUBSEC_ORIGINAL = 37521
EXIF_SUBSEC_DIGITIZED = 37522
EXIF_LENS_MODEL = 0xA434
EXIF_BODY_SERIAL = 0xA431

IPTC_KEYWORDS = (2, 25)

CHROMA_NIGHT_THRESHOLD = 2.0  # mean max-minus-min channel spread, 8-bit
CHROMA_GRID = 64


def _parse_exif_datetime(value: str, subsec: Optional[str]) -> Optional[dt.datetime]:
    try:
        stamp = dt.datetime.strptime(value.strip(), "%Y:%m:%d %H:%M:%S")
    except (ValueError, AttributeError):
        return None
    if subsec:
        digits = re.sub(r"\D", "", str(subsec))[:6]
        if digits:
            stamp += dt.timedelta(microseconds=int(digits.ljust(6, "0")))
    return stamp


def _chroma_spread(img: Image.Image) -> float:
    """Mean per-pixel (max channel - min channel) on a uniform sample grid."""
    rgb = img.convert("RGB")
    arr = np.asarray(rgb, dtype=np.int16)
    ys = np.linspace(0, arr.shape[0] - 1, min(CHROMA_GRID, arr.shape[0])).astype(int)
    xs = np.linspace(0, arr.shape[1] - 1, min(CHROMA_GRID, arr.shape[1])).astype(int)
    sample = arr[np.ix_(ys, xs)]
    return float((sample.max(axis=2) - sample.min(axis=2)).mean())


def _keywords(img: Image.Image) -> tuple[str, ...]:
    info = IptcImagePlugin.getiptcinfo(img)
    if not info or IPTC_KEYWORDS not in info:
        return ()
    raw = info[IPTC_KEYWORDS]
    if isinstance(raw, (bytes, str)):
        raw = [raw]
    out = []
    for kw in raw:
        out.append(kw.decode("utf-8", "replace") if isinstance(kw, bytes) else str(kw))
    return tuple(sorted(set(out)))


def image_id_for(path: Path, input_root: Optional[Path]) -> str:
    if input_root is not None:
        try:
            return path.resolve().relative_to(Path(input_root).resolve()).as_posix()
        except ValueError:
            pass
    return path.name


def analyze_image(
    path: Path,
    input_root: Optional[Path] = None,
    subsecond_pattern: Optional[str] = None,
) -> ImageRecord:
    """Extract metadata from one image file.

    subsecond_pattern, when given, is a regex with one capture group of
    fractional-second digits pulled from the file name; it refines the 1 s
    EXIF resolution so burst images order deterministically.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            width, height = img.size
            exif = img.getexif()
            ifd = exif.get_ifd(EXIF_IFD)
            keywords = _keywords(img)
            spread = _chroma_spread(img)
            model = exif.get(EXIF_MODEL)
            serial = ifd.get(EXIF_BODY_SERIAL)
            lens = ifd.get(EXIF_LENS_MODEL)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc

    captured_at = None
    for tag, subsec_tag in (
        (EXIF_DATETIME_ORIGINAL, EXIF_SUBSEC_ORIGINAL),
        (EXIF_DATETIME_DIGITIZED, EXIF_SUBSEC_DIGITIZED),
    ):
        value = ifd.get(tag)
        if value:
            captured_at = _parse_exif_datetime(value, ifd.get(subsec_tag))
            if captured_at:
                break
    if captured_at is None and exif.get(EXIF_DATETIME):
        captured_at = _parse_exif_datetime(exif.get(EXIF_DATETIME),
                                           ifd.get(EXIF_SUBSEC))
    timestamp_source = "exif"
    if captured_at is None:
        captured_at = dt.datetime.fromtimestamp(path.stat().st_mtime)
        timestamp_source = "mtime"
    elif captured_at.microsecond == 0 and subsecond_pattern:
        m = re.search(subsecond_pattern, path.name)
        if m and m.group(1):
            digits = m.group(1)[:6]
            captured_at += dt.timedelta(microseconds=int(digits.ljust(6, "0")))

    grayscale = spread <= CHROMA_NIGHT_THRESHOLD
    return ImageRecord(
        image_id=image_id_for(path, input_root),
        path=str(path),
        width=width,
        height=height,
        captured_at=captured_at,
        timestamp_source=timestamp_source,
        colorspace_class="grayscale_ir" if grayscale else "color",
        day_night="night" if grayscale else "day",
        keywords=keywords,
        camera_serial=str(serial) if serial else None,
        lens_id=str(lens) if lens else (str(model) if model else None),
    )


def split_batches(records: Sequence[ImageRecord], gap_seconds: float) -> list[Batch]:
    """Partition records into bursts: a new batch starts when the gap to the
    previous image exceeds gap_seconds. Ties order by path."""
    if not records:
        raise ValueError("no records to batch")
    if gap_seconds <= 0:
        raise ValueError("gap_seconds must be positive")
    ordered = sorted(records, key=lambda r: (r.captured_at, r.path))
    batches: list[Batch] = []
    members: list[ImageRecord] = [ordered[0]]
    for rec in ordered[1:]:
        gap = (rec.captured_at - members[-1].captured_at).total_seconds()
        if gap > gap_seconds:
            batches.append(_close_batch(members, len(batches)))
            members = []
        members.append(rec)
    batches.append(_close_batch(members, len(batches)))
    return batches


def _close_batch(members: list[ImageRecord], index: int) -> Batch:
    return Batch(
        batch_id=f"batch_{index:04d}",
        member_ids=[r.image_id for r in members],
        span=(members[0].captured_at, members[-1].captured_at),
    )


def ingest_video_frames(
    frame_dir: Path,
    fps: float,
    extensions: Sequence[str] = (".jpg", ".jpeg", ".png"),
    start_time: Optional[dt.datetime] = None,
    input_root: Optional[Path] = None,
) -> list[ImageRecord]:
    """Treat a directory of extracted frames as a burst with synthesized
    timestamps spaced 1/fps apart (frame extraction itself is external)."""
    if fps <= 0:
        raise ValueError("fps must be positive")
    frame_dir = Path(frame_dir)
    paths = sorted(
        p for p in frame_dir.iterdir()
        if p.is_file() and p.suffix.lower() in extensions
    )
    if not paths:
        raise EmptyDirectory(f"no frames in {frame_dir}")
    t0 = start_time or dt.datetime(1970, 1, 1)
    records = []
    for i, path in enumerate(paths):
        rec = analyze_image(path, input_root=input_root)
        rec.captured_at = t0 + dt.timedelta(seconds=i / fps)
        rec.timestamp_source = "synthetic"
        records.append(rec)
    return records
