"""Synthetic imagery with controlled metadata, used by tests and benchmarks.

Everything here is deterministic given the seed: frame pixels, JPEG bytes,
EXIF timestamps, and the ground-truth boxes of the moving targets.
"""

from __future__ import annotations

import datetime as dt
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .models import Region

EXIF_DATETIME = 306
EXIF_MODEL = 0x0110
EXIF_IFD = 0x8769
EXIF_DATETIME_ORIGINAL = 36867
EXIF_SUBSEC_ORIGINAL = 37521
EXIF_BODY_SERIAL = 0xA431


def moving_square_frames(
    n_frames: int = 60,
    frame_size: tuple[int, int] = (360, 120),
    square: int = 40,
    step: int = 5,
    noise_sigma: float = 2.0,
    background: int = 128,
    intensity: int = 255,
    start: tuple[int, int] = (10, 40),
    seed: int = 7,
) -> tuple[list[np.ndarray], list[Region]]:
    """Bright square marching across noisy gray frames; returns the frames
    and the true square position per frame."""
    width, height = frame_size
    rng = np.random.default_rng(seed)
    frames = []
    truths = []
    for i in range(n_frames):
        noise = rng.normal(0.0, noise_sigma, size=(height, width))
        frame = np.clip(background + noise, 0, 255)
        x = start[0] + step * i
        y = start[1]
        if x + square > width:
            raise ValueError("square walks out of frame; widen the frame")
        frame[y:y + square, x:x + square] = intensity
        frames.append(frame.astype(np.uint8))
        truths.append(Region(x, y, square, square))
    return frames, truths


def static_frames(
    n_frames: int = 30,
    frame_size: tuple[int, int] = (160, 120),
    noise_sigma: float = 2.0,
    background: int = 128,
    seed: int = 11,
) -> list[np.ndarray]:
    """Same scene re-noised per frame, as a static camera would record."""
    width, height = frame_size
    rng = np.random.default_rng(seed)
    return [
        np.clip(background + rng.normal(0.0, noise_sigma, (height, width)),
                0, 255).astype(np.uint8)
        for _ in range(n_frames)
    ]


def iptc_app13_segment(keywords: Sequence[str]) -> bytes:
    """JPEG APP13 segment carrying IPTC keywords (dataset 2:25)."""
    datasets = b""
    for kw in keywords:
        value = kw.encode("utf-8")
        datasets += b"\x1c\x02\x19" + struct.pack(">H", len(value)) + value
    irb = (b"Photoshop 3.0\x00" + b"8BIM" + struct.pack(">H", 0x0404)
           + b"\x00\x00" + struct.pack(">I", len(datasets)) + datasets)
    if len(datasets) % 2:
        irb += b"\x00"
    return b"\xff\xed" + struct.pack(">H", len(irb) + 2) + irb


def _inject_iptc(jpeg: bytes, keywords: Sequence[str]) -> bytes:
    segment = iptc_app13_segment(keywords)
    out = jpeg[:2]
    i = 2
    while jpeg[i] == 0xFF and jpeg[i + 1] in (0xE0, 0xE1):
        length = struct.unpack(">H", jpeg[i + 2:i + 4])[0]
        out += jpeg[i:i + 2 + length]
        i += 2 + length
    return out + segment + jpeg[i:]


def write_jpeg(
    path: Path,
    array: np.ndarray,
    captured_at: Optional[dt.datetime] = None,
    keywords: Sequence[str] = (),
    camera_serial: Optional[str] = None,
    camera_model: Optional[str] = None,
    quality: int = 92,
) -> Path:
    """Encode an array as JPEG with optional EXIF timestamp, serial, and
    IPTC keywords. Byte-deterministic for fixed inputs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = Image.fromarray(array)
    kwargs = {}
    if captured_at or camera_serial or camera_model:
        exif = Image.Exif()
        ifd = exif.get_ifd(EXIF_IFD)
        if captured_at:
            stamp = captured_at.strftime("%Y:%m:%d %H:%M:%S")
            exif[EXIF_DATETIME] = stamp
            ifd[EXIF_DATETIME_ORIGINAL] = stamp
            if captured_at.microsecond:
                ifd[EXIF_SUBSEC_ORIGINAL] = f"{captured_at.microsecond:06d}".rstrip("0")
        if camera_serial:
            ifd[EXIF_BODY_SERIAL] = camera_serial
        if camera_model:
            exif[EXIF_MODEL] = camera_model
        kwargs["exif"] = exif
    buf = io.BytesIO()
    img.save(buf, format="JPEG", quality=quality, **kwargs)
    data = buf.getvalue()
    if keywords:
        data = _inject_iptc(data, list(keywords))
    path.write_bytes(data)
    return path


@dataclass
class CorpusSpec:
    n_batches: int = 5
    frames_per_batch: int = 10
    frame_size: tuple[int, int] = (240, 160)
    square: int = 30
    step: int = 5
    start_x: int = 20
    noise_sigma: float = 2.0
    background: int = 120
    batch_gap_seconds: int = 300
    intra_gap: dt.timedelta = dt.timedelta(milliseconds=500)
    base_time: dt.datetime = dt.datetime(2022, 3, 29, 6, 30, 0)
    seed: int = 99
    camera_serial: str = "CAM01"


def build_corpus(
    image_dir: Path, spec: CorpusSpec = CorpusSpec(),
    truth_dir: Optional[Path] = None,
) -> list[Path]:
    """Write a small camera-trap-like corpus: bursts of a moving bright
    square, EXIF timestamps at two frames per second, one batch per burst.

    With truth_dir set, also writes per-image YOLO ground-truth label files
    for the evaluation harness.
    """
    image_dir = Path(image_dir)
    width, height = spec.frame_size
    paths = []
    for b in range(spec.n_batches):
        frames, truths = moving_square_frames(
            n_frames=spec.frames_per_batch,
            frame_size=spec.frame_size,
            square=spec.square,
            step=spec.step,
            noise_sigma=spec.noise_sigma,
            background=spec.background,
            start=(spec.start_x, (height - spec.square) // 2),
            seed=spec.seed + b,
        )
        batch_start = spec.base_time + dt.timedelta(
            seconds=b * spec.batch_gap_seconds)
        for i, frame in enumerate(frames):
            ts = batch_start + i * spec.intra_gap
            name = f"img_{b:02d}_{i:02d}.jpg"
            keywords = ("overcast",) if b % 2 == 0 else ("sunny",)
            paths.append(write_jpeg(
                image_dir / name, frame, captured_at=ts, keywords=keywords,
                camera_serial=spec.camera_serial, camera_model="SynthCam",
            ))
            if truth_dir is not None:
                truth = truths[i]
                cx = (truth.x + truth.w / 2) / width
                cy = (truth.y + truth.h / 2) / height
                line = (f"0 {cx:.6f} {cy:.6f} "
                        f"{truth.w / width:.6f} {truth.h / height:.6f}\n")
                out = Path(truth_dir) / f"img_{b:02d}_{i:02d}.txt"
                out.parent.mkdir(parents=True, exist_ok=True)
                out.write_text(line, encoding="utf-8")
    return paths
