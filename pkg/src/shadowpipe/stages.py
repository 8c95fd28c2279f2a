"""The registered pipeline stages and their artifact plumbing.

Each stage reads only the input directory, its predecessors' artifact
directories, and its own directory (plus the crowd vote inbox at the run
root, which is external human input). Artifacts are jsonl files and image
files with deterministic content and ordering.
"""

from __future__ import annotations

import logging
import shlex
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import crowd as crowd_mod
from . import dedup as dedup_mod
from .detect import ManifestEntry, run_detector
from .errors import DecodeError, ValidationError
from .fuse import apply_threshold, backmap, fuse_image
from .ingest import analyze_image, ingest_video_frames, split_batches
from .jsonl import read_json, read_jsonl, write_json, write_jsonl
from .models import (
    Batch, CropInfo, DedupGroup, Detection, FusedLabel, ImageRecord, Region,
    VoteTally, VoteTask,
)
from .output import export_soft, export_yolo, make_review_report, write_review_report
from .preprocess import load_profiles, profile_for, undistort
from .raster import load_image, save_png
from .segmentation import (
    ImgDiffParams, Mog2Params, extract_crops, segment_imgdiff, segment_mog2,
)

log = logging.getLogger("shadowpipe")

VOTES_DB = "votes.db"  # run-root crowd inbox, shared with `shadowpipe serve`


@dataclass
class ParamSpec:
    type: Optional[type] = None  # None = any
    default: object = None
    required: bool = False


@dataclass
class StageSpec:
    name: str
    runner: Callable[["StageContext"], "StageResult"]
    requires: tuple[str, ...] = ()
    after_if_present: tuple[str, ...] = ()
    params: dict[str, ParamSpec] = field(default_factory=dict)


@dataclass
class StageResult:
    record_counts: dict[str, int] = field(default_factory=dict)
    artifacts: list[Path] = field(default_factory=list)


@dataclass
class StageContext:
    input_dir: Path
    file_extensions: list[str]
    run_dir: Path
    instance: str
    params: dict
    preceding: list[tuple[str, str]]  # (stage name, instance) before this one

    @property
    def stage_dir(self) -> Path:
        return self.run_dir / self.instance

    def predecessor(self, stage_name: str) -> Optional[Path]:
        """Artifact dir of the latest earlier instance of stage_name."""
        for stage, instance in reversed(self.preceding):
            if stage == stage_name:
                return self.run_dir / instance
        return None

    def require_predecessor(self, stage_name: str) -> Path:
        path = self.predecessor(stage_name)
        if path is None:
            raise ValidationError(
                f"stage '{self.instance}' needs an earlier '{stage_name}' stage")
        return path


def sanitize_id(image_id: str) -> str:
    return image_id.replace("/", "__").replace("\\", "__")


# ---------------------------------------------------------------- artifacts

def load_records(stage_dir: Path) -> list[ImageRecord]:
    return [ImageRecord.from_dict(d) for d in read_jsonl(stage_dir / "records.jsonl")]


def load_batches(stage_dir: Path) -> list[Batch]:
    return [Batch.from_dict(d) for d in read_jsonl(stage_dir / "batches.jsonl")]


def load_image_map(stage_dir: Path) -> dict[str, str]:
    return {d["image_id"]: d["path"]
            for d in read_jsonl(stage_dir / "images.jsonl")}


def load_crops(stage_dir: Path) -> dict[str, CropInfo]:
    return {d["crop_id"]: CropInfo.from_dict(d)
            for d in read_jsonl(stage_dir / "crops.jsonl")}


def load_detections(stage_dir: Path, name: str = "detections.jsonl") -> list[Detection]:
    return [Detection.from_dict(d) for d in read_jsonl(stage_dir / name)]


def load_groups(stage_dir: Path) -> list[DedupGroup]:
    return [DedupGroup.from_dict(d) for d in read_jsonl(stage_dir / "groups.jsonl")]


def load_tallies(stage_dir: Path) -> list[VoteTally]:
    return [VoteTally.from_dict(d) for d in read_jsonl(stage_dir / "tallies.jsonl")]


def load_tasks(stage_dir: Path) -> list[VoteTask]:
    return [VoteTask.from_dict(d) for d in read_jsonl(stage_dir / "tasks.jsonl")]


def _image_paths(ctx: StageContext) -> dict[str, str]:
    """Pixel source per image: preprocessing output when configured,
    otherwise the original files."""
    pre = ctx.predecessor("preprocessing")
    if pre is not None:
        return load_image_map(pre)
    analysis = ctx.require_predecessor("analysis")
    return {r.image_id: r.path for r in load_records(analysis)}


# ------------------------------------------------------------------ stages

def run_analysis(ctx: StageContext) -> StageResult:
    exts = {e.lower() if e.startswith(".") else f".{e.lower()}"
            for e in ctx.file_extensions}
    skipped = 0
    if ctx.params.get("video_fps"):
        # input_dir holds pre-extracted video frames; synthesize timestamps
        records = ingest_video_frames(
            ctx.input_dir, ctx.params["video_fps"],
            extensions=sorted(exts), input_root=ctx.input_dir)
    else:
        paths = sorted(
            (p for p in Path(ctx.input_dir).rglob("*")
             if p.is_file() and p.suffix.lower() in exts),
            key=lambda p: p.relative_to(ctx.input_dir).as_posix(),
        )
        records = []
        for path in paths:
            try:
                records.append(analyze_image(
                    path, input_root=ctx.input_dir,
                    subsecond_pattern=ctx.params.get("subsecond_pattern")))
            except DecodeError as exc:
                log.warning("excluding undecodable image: %s", exc)
                skipped += 1
    out = ctx.stage_dir / "records.jsonl"
    count = write_jsonl(out, (r.to_dict() for r in records))
    return StageResult({"records": count, "skipped": skipped}, [out])


def run_batching(ctx: StageContext) -> StageResult:
    records = load_records(ctx.require_predecessor("analysis"))
    batches = split_batches(records, ctx.params["gap_seconds"])
    out = ctx.stage_dir / "batches.jsonl"
    count = write_jsonl(out, (b.to_dict() for b in batches))
    return StageResult({"batches": count}, [out])


def run_preprocessing(ctx: StageContext) -> StageResult:
    records = load_records(ctx.require_predecessor("analysis"))
    profiles_path = ctx.params.get("profiles")
    rows = []
    corrected = 0
    if profiles_path:
        profiles = load_profiles(Path(profiles_path))
        for rec in records:
            profile = profile_for(profiles, rec.camera_serial,
                                  strict=ctx.params["strict"])
            if profile.is_identity:
                rows.append({"image_id": rec.image_id, "path": rec.path})
                continue
            image = load_image(Path(rec.path))
            out_path = ctx.stage_dir / "preprocessed" / f"{sanitize_id(rec.image_id)}.png"
            save_png(out_path, undistort(image, profile))
            rows.append({"image_id": rec.image_id, "path": str(out_path)})
            corrected += 1
    else:
        # Pass-through: the detector was trained on unmodified images.
        rows = [{"image_id": r.image_id, "path": r.path} for r in records]
    out = ctx.stage_dir / "images.jsonl"
    count = write_jsonl(out, rows)
    return StageResult({"images": count, "corrected": corrected}, [out])


def run_segmentation(ctx: StageContext) -> StageResult:
    batches = load_batches(ctx.require_predecessor("batching"))
    image_paths = _image_paths(ctx)
    method = ctx.params["method"]

    region_rows = []
    crop_rows: list[CropInfo] = []
    crops_dir = ctx.stage_dir / "crops"
    debug_dir = ctx.stage_dir / "debug"
    n_regions = 0
    for batch in sorted(batches, key=lambda b: b.batch_id):
        frames = [(image_id, load_image(Path(image_paths[image_id])))
                  for image_id in batch.member_ids]
        masks = [] if ctx.params["debug_images"] else None
        if method == "mog2":
            params = Mog2Params(
                k_modes=ctx.params["k_modes"],
                alpha=ctx.params["alpha"],
                var_threshold=ctx.params["var_threshold"],
                background_ratio=ctx.params["background_ratio"],
                init_variance=ctx.params["init_variance"],
                min_variance=ctx.params["min_variance"],
                burn_in=ctx.params["burn_in"],
                min_area_frac=ctx.params["min_area_frac"],
                pad_px=ctx.params["pad_px"],
                work_long_side=ctx.params["work_long_side"],
                color=ctx.params["color"],
            )
            results = segment_mog2(frames, params, collect_masks=masks)
        elif method == "imgdiff":
            params = ImgDiffParams(
                diff_threshold=ctx.params["diff_threshold"],
                min_area_frac=ctx.params["min_area_frac"],
                pad_px=ctx.params["pad_px"],
                work_long_side=ctx.params["work_long_side"],
            )
            results = segment_imgdiff(frames, params, collect_masks=masks)
        else:
            raise ValidationError(f"unknown segmentation method '{method}'")

        arrays = dict(frames)
        for image_id, regions in results:
            region_rows.append({
                "image_id": image_id,
                "regions": [r.to_dict() for r in regions],
            })
            n_regions += len(regions)
            crops = extract_crops(arrays[image_id], image_id, regions,
                                  ctx.params["target_long_side"])
            for n, (crop_arr, crop_region) in enumerate(crops):
                crop_id = f"{sanitize_id(image_id)}_c{n:02d}"
                crop_path = crops_dir / f"{crop_id}.png"
                save_png(crop_path, crop_arr)
                frame = crop_region.frame
                crop_rows.append(CropInfo(
                    crop_id=crop_id,
                    parent_image_id=image_id,
                    path=str(crop_path),
                    offset_x=frame.offset_x,
                    offset_y=frame.offset_y,
                    scale=frame.scale,
                    width=crop_region.w,
                    height=crop_region.h,
                    source=method,
                ))
        if masks:
            for image_id, mask in zip(batch.member_ids, masks):
                save_png(debug_dir / f"{sanitize_id(image_id)}_mask.png",
                         (mask * 255).astype("uint8"))

    regions_out = ctx.stage_dir / "regions.jsonl"
    crops_out = ctx.stage_dir / "crops.jsonl"
    write_jsonl(regions_out, region_rows)
    write_jsonl(crops_out, (c.to_dict() for c in crop_rows))
    return StageResult(
        {"images": len(region_rows), "regions": n_regions, "crops": len(crop_rows)},
        [regions_out, crops_out],
    )


def run_detection(ctx: StageContext) -> StageResult:
    records = {r.image_id: r
               for r in load_records(ctx.require_predecessor("analysis"))}
    image_paths = _image_paths(ctx)

    manifest: list[ManifestEntry] = []
    if ctx.params["include_full_frames"]:
        for image_id in sorted(records):
            rec = records[image_id]
            manifest.append(ManifestEntry(
                subject_id=image_id, path=image_paths[image_id],
                width=rec.width, height=rec.height, subject_kind="image"))
    seg_dir = ctx.predecessor("segmentation")
    if seg_dir is not None:
        for crop_id, crop in sorted(load_crops(seg_dir).items()):
            manifest.append(ManifestEntry(
                subject_id=crop_id, path=crop.path,
                width=crop.width, height=crop.height,
                subject_kind="crop", frame=crop.frame))

    adapter = ctx.params.get("adapter")
    if adapter is None:
        adapter = [sys.executable, "-m", "shadowpipe.adapters.mock"]
    elif isinstance(adapter, str):
        adapter = shlex.split(adapter)

    detections = run_detector(
        manifest, adapter, ctx.params["classes"],
        model_id=ctx.params["model_id"], batch_size=ctx.params["batch_size"],
        workers=ctx.params["workers"],
    )
    detections.sort(key=lambda d: (d.subject, d.region.key(), d.source))
    out = ctx.stage_dir / "detections.jsonl"
    count = write_jsonl(out, (d.to_dict() for d in detections))
    return StageResult(
        {"detections": count, "manifest": len(manifest)}, [out])


def run_duplicate_handling(ctx: StageContext) -> StageResult:
    crops = load_crops(ctx.require_predecessor("segmentation"))
    hashes = {
        crop_id: dedup_mod.dhash(load_image(Path(info.path)))
        for crop_id, info in sorted(crops.items())
    }
    groups = dedup_mod.group_duplicates(hashes, ctx.params["threshold_bits"])
    out = ctx.stage_dir / "groups.jsonl"
    count = write_jsonl(out, (g.to_dict() for g in groups))
    return StageResult({"groups": count, "crops": len(crops)}, [out])


def run_evaluation(ctx: StageContext) -> StageResult:
    groups = load_groups(ctx.require_predecessor("duplicate_handling"))
    seg_dir = ctx.require_predecessor("segmentation")
    crops = load_crops(seg_dir)
    det_dir = ctx.predecessor("detection")
    detections = load_detections(det_dir) if det_dir else []

    tasks = crowd_mod.build_tasks(
        groups, detections,
        crop_files={cid: c.path for cid, c in crops.items()},
        classes=ctx.params["classes"],
        min_votes=ctx.params["min_votes"],
    )
    tasks_out = ctx.stage_dir / "tasks.jsonl"
    write_jsonl(tasks_out, (t.to_dict() for t in tasks))

    replay = ctx.params.get("replay_export")
    if replay:
        tallies = crowd_mod.import_results(read_json(Path(replay)))
    else:
        db_path = ctx.run_dir / VOTES_DB
        if not db_path.exists():
            raise ValidationError(
                f"no votes yet: start `shadowpipe serve --run {ctx.run_dir}` "
                f"to collect them, then resume from '{ctx.instance}'")
        store = crowd_mod.VoteStore(db_path)
        try:
            store.publish(tasks)
            tallies = store.tallies()
        finally:
            store.close()

    by_id = {t.task_id: t for t in tallies}
    missing = [t.task_id for t in tasks if t.task_id not in by_id]
    incomplete = [t.task_id for t in tasks
                  if t.task_id in by_id and not by_id[t.task_id].complete]
    if ctx.params["require_complete"] and (missing or incomplete):
        raise ValidationError(
            f"{len(missing)} task(s) unvoted and {len(incomplete)} below "
            f"min_votes; collect votes via `shadowpipe serve` and resume "
            f"from '{ctx.instance}'")

    rows = [by_id[t.task_id].to_dict() for t in tasks if t.task_id in by_id]
    tallies_out = ctx.stage_dir / "tallies.jsonl"
    write_jsonl(tallies_out, rows)
    return StageResult(
        {"tasks": len(tasks), "tallies": len(rows),
         "incomplete": len(incomplete)},
        [tasks_out, tallies_out],
    )


def run_backmapping(ctx: StageContext) -> StageResult:
    records = {r.image_id: r
               for r in load_records(ctx.require_predecessor("analysis"))}
    image_sizes = {i: (r.width, r.height) for i, r in records.items()}
    detections = load_detections(ctx.require_predecessor("detection"))

    dedup_dir = ctx.predecessor("duplicate_handling")
    groups = load_groups(dedup_dir) if dedup_dir else []
    seg_dir = ctx.predecessor("segmentation")
    crops = load_crops(seg_dir) if seg_dir else {}

    eval_dir = ctx.predecessor("evaluation")
    crowd_detections: list[Detection] = []
    if eval_dir is not None:
        tasks = {t.task_id: t for t in load_tasks(eval_dir)}
        for tally in load_tallies(eval_dir):
            if not tally.complete:
                continue  # gate: incomplete tallies never reach fusion
            task = tasks[tally.task_id]
            crop = crops[task.crop_id]
            crowd_detections.append(Detection(
                detection_id=f"crowd_{tally.task_id}",
                source="crowd",
                subject=task.crop_id,
                subject_kind="crop",
                region=Region(0, 0, crop.width, crop.height, crop.frame),
                class_probs=tally.fractions,
                provenance={"task_id": tally.task_id},
            ))

    mapped = backmap(detections + crowd_detections, groups, crops, image_sizes)
    out = ctx.stage_dir / "backmapped.jsonl"
    count = write_jsonl(out, (d.to_dict() for d in mapped))
    return StageResult(
        {"backmapped": count, "crowd_sources": len(crowd_detections)}, [out])


def run_decision(ctx: StageContext) -> StageResult:
    mapped = load_detections(ctx.require_predecessor("backmapping"),
                             "backmapped.jsonl")
    by_image: dict[str, list[Detection]] = {}
    for det in mapped:
        by_image.setdefault(det.subject, []).append(det)

    fused: list[FusedLabel] = []
    for image_id in sorted(by_image):
        fused.extend(fuse_image(
            image_id, by_image[image_id],
            weights=ctx.params["weights"],
            merge_iou=ctx.params["merge_iou"],
            mode=ctx.params["fusion_mode"],
        ))
    hard, _ = apply_threshold(fused, ctx.params["threshold"])

    fused_out = ctx.stage_dir / "fused.jsonl"
    hard_out = ctx.stage_dir / "hard_labels.jsonl"
    write_jsonl(fused_out, (l.to_dict() for l in fused))
    write_jsonl(hard_out, (l.to_dict() for l in hard))
    artifacts = [fused_out, hard_out]

    band = ctx.params.get("review_band")
    if band:
        report = make_review_report(fused, (band[0], band[1]))
        write_review_report(report, ctx.stage_dir / "review.json",
                            ctx.stage_dir / "review.md")
        artifacts.append(ctx.stage_dir / "review.json")

    return StageResult({"fused": len(fused), "hard": len(hard)}, artifacts)


def run_training_data_generator(ctx: StageContext) -> StageResult:
    records = load_records(ctx.require_predecessor("analysis"))
    dims = {r.image_id: (r.width, r.height) for r in records}
    decision_dir = ctx.require_predecessor("decision")
    hard = [FusedLabel.from_dict(d)
            for d in read_jsonl(decision_dir / "hard_labels.jsonl")]
    fused = [FusedLabel.from_dict(d)
             for d in read_jsonl(decision_dir / "fused.jsonl")]

    classes = ctx.params["classes"]
    class_index = {name: i for i, name in enumerate(classes)}
    outputs = ctx.params["outputs"]
    counts = {"hard_labels": 0, "soft_labels": 0}
    artifacts: list[Path] = []

    if "yolo" in outputs:
        by_image = {r.image_id: [] for r in records}
        for label in hard:
            if label.class_name in class_index and label.image_id in by_image:
                by_image[label.image_id].append(label)
                counts["hard_labels"] += 1
        labels_dir = ctx.stage_dir / "labels"
        pathed = {
            str(Path(i).with_suffix("")): labels
            for i, labels in by_image.items()
        }
        pathed_dims = {str(Path(i).with_suffix("")): dims[i] for i in by_image}
        export_yolo(pathed, class_index, pathed_dims, labels_dir)
        classes_txt = ctx.stage_dir / "classes.txt"
        classes_txt.write_text("".join(c + "\n" for c in classes), "utf-8")
        artifacts += [labels_dir, classes_txt]

    if "soft" in outputs:
        by_image = {r.image_id: [] for r in records}
        for label in fused:
            if label.image_id in by_image:
                by_image[label.image_id].append(label)
                counts["soft_labels"] += 1
        soft_dir = ctx.stage_dir / "soft"
        export_soft({str(Path(i).with_suffix("")): l for i, l in by_image.items()},
                    soft_dir)
        artifacts.append(soft_dir)

    return StageResult(counts, artifacts)


STAGE_SPECS: dict[str, StageSpec] = {
    "analysis": StageSpec(
        name="analysis", runner=run_analysis,
        params={
            "subsecond_pattern": ParamSpec(str),
            "video_fps": ParamSpec(float),  # input_dir is a frame directory
        },
    ),
    "batching": StageSpec(
        name="batching", runner=run_batching,
        requires=("analysis",),
        params={"gap_seconds": ParamSpec(float, 5.0)},
    ),
    "preprocessing": StageSpec(
        name="preprocessing", runner=run_preprocessing,
        requires=("analysis",),
        params={
            "profiles": ParamSpec(str),
            "strict": ParamSpec(bool, False),
        },
    ),
    "segmentation": StageSpec(
        name="segmentation", runner=run_segmentation,
        requires=("batching",),
        after_if_present=("preprocessing",),
        params={
            "method": ParamSpec(str, "mog2"),
            "k_modes": ParamSpec(int, 5),
            "alpha": ParamSpec(float),
            "var_threshold": ParamSpec(float, 16.0),
            "background_ratio": ParamSpec(float, 0.9),
            "init_variance": ParamSpec(float, 225.0),
            "min_variance": ParamSpec(float, 4.0),
            "burn_in": ParamSpec(int),
            "min_area_frac": ParamSpec(float, 0.0005),
            "pad_px": ParamSpec(int, 10),
            "work_long_side": ParamSpec(int, 960),
            "diff_threshold": ParamSpec(float, 25.0),
            "target_long_side": ParamSpec(int),
            "color": ParamSpec(bool, False),
            "debug_images": ParamSpec(bool, False),
        },
    ),
    "detection": StageSpec(
        name="detection", runner=run_detection,
        requires=("analysis",),
        after_if_present=("segmentation", "preprocessing"),
        params={
            "adapter": ParamSpec(None),  # string or argv list; None = mock
            "classes": ParamSpec(list, required=True),
            "model_id": ParamSpec(str, "adapter"),
            "batch_size": ParamSpec(int, 64),
            "workers": ParamSpec(int, 1),
            "include_full_frames": ParamSpec(bool, True),
        },
    ),
    "duplicate_handling": StageSpec(
        name="duplicate_handling", runner=run_duplicate_handling,
        requires=("segmentation",),
        after_if_present=("detection",),
        params={"threshold_bits": ParamSpec(int, 10)},
    ),
    "evaluation": StageSpec(
        name="evaluation", runner=run_evaluation,
        requires=("duplicate_handling",),
        after_if_present=("detection",),
        params={
            "classes": ParamSpec(list, required=True),
            "min_votes": ParamSpec(int, 3),
            "replay_export": ParamSpec(str),
            "require_complete": ParamSpec(bool, True),
        },
    ),
    "backmapping": StageSpec(
        name="backmapping", runner=run_backmapping,
        requires=("detection",),
        after_if_present=("duplicate_handling", "evaluation"),
        params={},
    ),
    "decision": StageSpec(
        name="decision", runner=run_decision,
        requires=("backmapping",),
        params={
            "weights": ParamSpec(dict, {"evaluation": 0.6, "detection": 0.4}),
            "merge_iou": ParamSpec(float, 0.5),
            "threshold": ParamSpec(float, 0.5),
            "fusion_mode": ParamSpec(str, "top_class"),
            "review_band": ParamSpec(list),
        },
    ),
    "training_data_generator": StageSpec(
        name="training_data_generator", runner=run_training_data_generator,
        requires=("decision",),
        params={
            "classes": ParamSpec(list, required=True),
            "outputs": ParamSpec(list, ["yolo", "soft"]),
        },
    ),
}
