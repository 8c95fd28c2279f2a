"""Shared fixtures: the synthetic corpus and full-pipeline configs."""

import copy
import json
from pathlib import Path

import pytest

from shadowpipe.config import validate_config
from shadowpipe.crowd import build_tasks, integer_percentages
from shadowpipe.jsonl import write_json
from shadowpipe.models import VoteTally
from shadowpipe.synthetic import CorpusSpec, build_corpus

E2E_CLASSES = ["target", "background"]


def e2e_config_doc(input_dir, run_dir, replay_export=None) -> dict:
    """The ten-stage pipeline wired for the synthetic corpus and the mock
    detector. Segmentation alpha/burn-in suit the 10-frame bursts."""
    return {
        "general": {
            "input_dir": str(input_dir),
            "file_extensions": [".jpg"],
            "run_dir": str(run_dir),
        },
        "modules": [
            {"stage": "analysis", "params": {}},
            {"stage": "batching", "params": {"gap_seconds": 5}},
            {"stage": "preprocessing", "params": {}},
            {"stage": "segmentation",
             "params": {"method": "mog2", "alpha": 0.01, "burn_in": 2,
                        "pad_px": 4}},
            {"stage": "detection",
             "params": {"classes": E2E_CLASSES, "model_id": "mock"}},
            {"stage": "duplicate_handling", "params": {"threshold_bits": 10}},
            {"stage": "evaluation",
             "params": {"classes": ["target"], "min_votes": 3,
                        "replay_export": (str(replay_export)
                                          if replay_export else None)}},
            {"stage": "backmapping", "params": {}},
            {"stage": "decision",
             "params": {"weights": {"evaluation": 0.6, "detection": 0.4},
                        "merge_iou": 0.5, "threshold": 0.5}},
            {"stage": "training_data_generator",
             "params": {"classes": ["target"], "outputs": ["yolo", "soft"]}},
        ],
    }


def config_for(doc: dict, run_dir) -> "PipelineConfig":  # noqa: F821
    doc = copy.deepcopy(doc)
    doc["general"]["run_dir"] = str(run_dir)
    return validate_config(doc)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """50 synthetic camera-trap images (5 bursts of 10) plus ground truth."""
    root = tmp_path_factory.mktemp("corpus")
    images = root / "images"
    truth = root / "truth"
    build_corpus(images, CorpusSpec(), truth_dir=truth)
    return {"images": images, "truth": truth}


@pytest.fixture(scope="session")
def replay_export(corpus, tmp_path_factory):
    """Vote export fixture covering every task the corpus produces.

    Derived by running the pipeline up to duplicate handling once, then
    synthesizing three 'target' votes per task whose crop the mock detector
    fired on (and 'nothing' votes otherwise).
    """
    from shadowpipe.engine import run_pipeline
    from shadowpipe.stages import load_crops, load_detections, load_groups

    scratch = tmp_path_factory.mktemp("replay") / "scratch_run"
    config = config_for(e2e_config_doc(corpus["images"], scratch), scratch)
    run_pipeline(config, stop_after="duplicate_handling")

    groups = load_groups(scratch / "duplicate_handling")
    crops = load_crops(scratch / "segmentation")
    detections = load_detections(scratch / "detection")
    tasks = build_tasks(groups, detections,
                        {cid: c.path for cid, c in crops.items()},
                        classes=["target"], min_votes=3)
    detected = {d.subject for d in detections if d.subject_kind == "crop"}

    entries = []
    for task in tasks:
        members = next(g.members for g in groups
                       if g.representative == task.crop_id)
        choice = "target" if any(m in detected for m in members) else "nothing"
        tally = VoteTally(task_id=task.task_id, counts={choice: 3}, min_votes=3)
        entries.append({
            "task_id": task.task_id,
            "crop_id": task.crop_id,
            "min_votes": 3,
            "total_votes": 3,
            "complete": True,
            "counts": tally.counts,
            "percentages": integer_percentages(tally.fractions),
            "fractions": {c: round(f, 6) for c, f in tally.fractions.items()},
        })
    path = tmp_path_factory.mktemp("replay_export") / "votes_export.json"
    write_json(path, {"schema_version": 1, "tasks": entries})
    return path


def read_output_bytes(run_dir: Path) -> dict[str, bytes]:
    """The determinism-relevant artifacts of a finished run."""
    out = {"hard_labels.jsonl":
           (run_dir / "decision" / "hard_labels.jsonl").read_bytes()}
    labels_root = run_dir / "training_data_generator" / "labels"
    for path in sorted(labels_root.rglob("*.txt")):
        out[f"labels/{path.relative_to(labels_root).as_posix()}"] = \
            path.read_bytes()
    return out
