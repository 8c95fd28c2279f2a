"""Config validation, ledger mechanics, resume, and the CLI."""

import datetime as dt
import json
from pathlib import Path

import numpy as np
import pytest

from shadowpipe import cli
from shadowpipe.config import load_config, validate_config
from shadowpipe.engine import describe_run, run_pipeline
from shadowpipe.errors import (
    LedgerConflict, NotFound, ParseError, StageError, ValidationError,
)
from shadowpipe.ledger import RunLedger
from shadowpipe.synthetic import write_jpeg

from conftest import config_for, e2e_config_doc


def minimal_doc(input_dir, run_dir, stages=("analysis", "batching")):
    return {
        "general": {"input_dir": str(input_dir), "file_extensions": [".jpg"],
                    "run_dir": str(run_dir)},
        "modules": [{"stage": s, "params": {}} for s in stages],
    }


@pytest.fixture
def tiny_corpus(tmp_path):
    """Two short bursts, enough for the light-stage pipelines."""
    images = tmp_path / "imgs"
    t0 = dt.datetime(2022, 3, 29, 12, 0, 0)
    rng = np.random.default_rng(1)
    for b in range(2):
        for i in range(3):
            arr = rng.integers(60, 200, (60, 80, 3)).astype(np.uint8)
            write_jpeg(images / f"b{b}_{i}.jpg", arr,
                       captured_at=t0 + dt.timedelta(seconds=b * 600 + i))
    return images


class TestConfigValidation:
    def test_minimal_two_stage_pipeline(self, tmp_path):
        config = validate_config(minimal_doc(tmp_path, tmp_path / "run"))
        assert [m.stage for m in config.modules] == ["analysis", "batching"]

    def test_unknown_stage_named_in_error(self, tmp_path):
        doc = minimal_doc(tmp_path, tmp_path / "run")
        doc["modules"].append({"stage": "frobnicate"})
        with pytest.raises(ValidationError, match="frobnicate"):
            validate_config(doc)

    def test_default_config_mirrors_reported_settings(self):
        config = load_config(Path(__file__).parent.parent
                             / "configs" / "default.json")
        assert len(config.modules) == 10
        decision = next(m for m in config.modules if m.stage == "decision")
        assert decision.params["weights"] == {"evaluation": 0.6,
                                              "detection": 0.4}
        assert decision.params["threshold"] == 0.5
        batching = next(m for m in config.modules if m.stage == "batching")
        assert batching.params["gap_seconds"] == 5

    def test_missing_required_param(self, tmp_path):
        doc = minimal_doc(tmp_path, tmp_path / "run")
        doc["modules"] += [
            {"stage": "preprocessing"},
            {"stage": "segmentation"},
            {"stage": "detection", "params": {}},  # classes missing
        ]
        with pytest.raises(ValidationError, match="classes"):
            validate_config(doc)

    def test_unknown_param_rejected(self, tmp_path):
        doc = minimal_doc(tmp_path, tmp_path / "run")
        doc["modules"][1]["params"] = {"gap_minutes": 1}
        with pytest.raises(ValidationError, match="gap_minutes"):
            validate_config(doc)

    def test_bad_param_type(self, tmp_path):
        doc = minimal_doc(tmp_path, tmp_path / "run")
        doc["modules"][1]["params"] = {"gap_seconds": "five"}
        with pytest.raises(ValidationError, match="gap_seconds"):
            validate_config(doc)

    def test_dependency_order_enforced(self, tmp_path):
        doc = minimal_doc(tmp_path, tmp_path / "run", stages=("batching",))
        with pytest.raises(ValidationError, match="requires 'analysis'"):
            validate_config(doc)

    def test_soft_order_enforced(self, tmp_path):
        doc = minimal_doc(
            tmp_path, tmp_path / "run",
            stages=("analysis", "batching", "segmentation", "preprocessing"))
        with pytest.raises(ValidationError, match="must come after"):
            validate_config(doc)

    def test_duplicate_stage_gets_distinct_instance(self, tmp_path):
        doc = minimal_doc(
            tmp_path, tmp_path / "run",
            stages=("analysis", "batching", "segmentation", "segmentation"))
        config = validate_config(doc)
        assert [m.instance for m in config.modules][-2:] == \
            ["segmentation", "segmentation__2"]

    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        with pytest.raises(ParseError):
            load_config(bad)


class TestRunAndResume:
    def test_fresh_run_appends_one_record_per_stage(self, tiny_corpus, tmp_path):
        run_dir = tmp_path / "run"
        doc = minimal_doc(tiny_corpus, run_dir,
                          stages=("analysis", "batching", "preprocessing"))
        ledger = run_pipeline(validate_config(doc))
        assert [r.status for r in ledger.records] == ["completed"] * 3
        assert (run_dir / "ledger.jsonl").exists()
        assert ledger.records[0].record_counts["records"] == 6

    def test_rerun_in_same_dir_refused(self, tiny_corpus, tmp_path):
        doc = minimal_doc(tiny_corpus, tmp_path / "run")
        run_pipeline(validate_config(doc))
        with pytest.raises(LedgerConflict):
            run_pipeline(validate_config(doc))

    def test_interrupt_and_resume_equals_uninterrupted(self, tiny_corpus,
                                                       tmp_path):
        stages = ("analysis", "batching", "preprocessing")
        straight_dir = tmp_path / "straight"
        resumed_dir = tmp_path / "resumed"
        run_pipeline(validate_config(minimal_doc(tiny_corpus, straight_dir,
                                                 stages)))
        config = validate_config(minimal_doc(tiny_corpus, resumed_dir, stages))
        run_pipeline(config, stop_after="batching")
        before = RunLedger.load(resumed_dir)
        run_pipeline(config, resume_from="preprocessing")
        after = RunLedger.load(resumed_dir)
        straight = RunLedger.load(straight_dir)

        # pre-interrupt records survive byte-for-byte
        assert [r.to_dict() for r in after.records[:2]] == \
            [r.to_dict() for r in before.records]
        # and the final ledger matches an uninterrupted run up to timestamps
        def scrub(records):
            out = []
            for r in records:
                d = r.to_dict()
                d.pop("started_at"), d.pop("finished_at")
                out.append(d)
            return out

        assert scrub(after.records) == scrub(straight.records)
        for name in ("analysis/records.jsonl", "batching/batches.jsonl",
                     "preprocessing/images.jsonl"):
            assert (resumed_dir / name).read_bytes() == \
                (straight_dir / name).read_bytes()

    def test_resume_with_changed_config_conflicts(self, tiny_corpus, tmp_path):
        run_dir = tmp_path / "run"
        config = validate_config(minimal_doc(tiny_corpus, run_dir))
        run_pipeline(config, stop_after="analysis")
        changed = minimal_doc(tiny_corpus, run_dir)
        changed["modules"][1]["params"] = {"gap_seconds": 9}
        with pytest.raises(LedgerConflict):
            run_pipeline(validate_config(changed), resume_from="batching")

    def test_resume_requires_completed_prefix(self, tiny_corpus, tmp_path):
        run_dir = tmp_path / "run"
        stages = ("analysis", "batching", "preprocessing")
        config = validate_config(minimal_doc(tiny_corpus, run_dir, stages))
        run_pipeline(config, stop_after="analysis")
        with pytest.raises(LedgerConflict, match="batching"):
            run_pipeline(config, resume_from="preprocessing")

    def test_failed_stage_recorded_and_raised(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        config = validate_config(minimal_doc(empty, tmp_path / "run"))
        with pytest.raises(StageError, match="batching"):
            run_pipeline(config)  # zero records to batch
        ledger = RunLedger.load(tmp_path / "run")
        assert [r.status for r in ledger.records] == ["completed", "failed"]
        assert "batch" in ledger.records[-1].error

    def test_duplicate_stage_instances_run_in_own_dirs(self, tiny_corpus,
                                                       tmp_path):
        run_dir = tmp_path / "run"
        doc = minimal_doc(tiny_corpus, run_dir,
                          stages=("analysis", "batching"))
        doc["modules"].append({"stage": "batching",
                               "params": {"gap_seconds": 1000}})
        ledger = run_pipeline(validate_config(doc))
        assert (run_dir / "batching").is_dir()
        assert (run_dir / "batching__2").is_dir()
        assert ledger.records[1].record_counts["batches"] == 2
        assert ledger.records[2].record_counts["batches"] == 1


class TestStageVariants:
    def test_undecodable_input_excluded_not_fatal(self, tiny_corpus, tmp_path):
        (tiny_corpus / "broken.jpg").write_bytes(b"JFIF? hardly")
        doc = minimal_doc(tiny_corpus, tmp_path / "run", stages=("analysis",))
        ledger = run_pipeline(validate_config(doc))
        counts = ledger.records[0].record_counts
        assert counts == {"records": 6, "skipped": 1}

    def test_video_frame_directory_mode(self, tmp_path):
        frames = tmp_path / "frames"
        rng = np.random.default_rng(2)
        for i in range(8):
            write_jpeg(frames / f"frame_{i:04d}.jpg",
                       rng.integers(0, 255, (40, 60, 3)).astype(np.uint8))
        doc = minimal_doc(frames, tmp_path / "run")
        doc["modules"][0]["params"] = {"video_fps": 4}
        doc["modules"][1]["params"] = {"gap_seconds": 1}
        ledger = run_pipeline(validate_config(doc))
        assert ledger.records[0].record_counts["records"] == 8
        assert ledger.records[1].record_counts["batches"] == 1  # 0.25 s spacing

    def test_profile_correction_and_string_adapter(self, corpus, tmp_path):
        from shadowpipe.jsonl import write_json
        import sys

        profiles = tmp_path / "profiles.json"
        # negligible distortion: exercises the resampling path while leaving
        # crops pixel-identical
        write_json(profiles, {"CAM01": {"k1": 1e-9, "cx": 120.0, "cy": 80.0,
                                        "fx": 200.0, "fy": 200.0}})
        run_dir = tmp_path / "run"
        doc = e2e_config_doc(corpus["images"], run_dir)
        doc["modules"][2]["params"] = {"profiles": str(profiles),
                                       "strict": True}
        doc["modules"][4]["params"]["adapter"] = \
            f"{sys.executable} -m shadowpipe.adapters.mock"
        config = config_for(doc, run_dir)
        ledger = run_pipeline(config, stop_after="duplicate_handling")
        by_stage = {r.instance: r.record_counts for r in ledger.records}
        assert by_stage["preprocessing"]["corrected"] == 50
        assert (run_dir / "preprocessing" / "preprocessed").is_dir()
        assert by_stage["detection"]["detections"] > 0

    def test_review_band_report(self, corpus, replay_export, tmp_path):
        run_dir = tmp_path / "run"
        doc = e2e_config_doc(corpus["images"], run_dir, replay_export)
        doc["modules"][8]["params"]["review_band"] = [0.0, 1.0]
        run_pipeline(config_for(doc, run_dir))
        review = json.loads((run_dir / "decision" / "review.json").read_text())
        assert review["count"] > 0
        assert (run_dir / "decision" / "review.md").exists()


class TestDescribeRun:
    def test_completed_run_summary(self, tiny_corpus, tmp_path):
        run_dir = tmp_path / "run"
        run_pipeline(validate_config(minimal_doc(tiny_corpus, run_dir)))
        text = describe_run(run_dir)
        assert text.count("completed") == 2
        assert "analysis" in text and "batching" in text

    def test_failed_run_flags_stage(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(StageError):
            run_pipeline(validate_config(minimal_doc(empty, tmp_path / "run")))
        text = describe_run(tmp_path / "run")
        assert "failed" in text and "error:" in text

    def test_missing_run_dir(self, tmp_path):
        with pytest.raises(NotFound):
            describe_run(tmp_path / "nothing_here")


class TestCli:
    def test_run_and_status(self, tiny_corpus, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(minimal_doc(tiny_corpus, tmp_path / "run")))
        assert cli.main(["run", "-c", str(cfg)]) == 0
        assert cli.main(["status", str(tmp_path / "run")]) == 0
        assert "completed" in capsys.readouterr().out

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"general": {}, "modules": []}))
        assert cli.main(["run", "-c", str(cfg)]) == 2

    def test_stage_failure_exit_code(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(minimal_doc(empty, tmp_path / "run")))
        assert cli.main(["run", "-c", str(cfg)]) == 3

    def test_evaluate_smoke(self, tmp_path, capsys):
        truth = tmp_path / "truth"
        truth.mkdir()
        (truth / "img.txt").write_text("0 0.5 0.5 0.25 0.25\n")
        out = tmp_path / "report.json"
        code = cli.main(["evaluate", "--pred", str(truth), "--truth",
                         str(truth), "--alpha", "0.5,0.25", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["alpha=0.5"]["tp"] == 1
        assert report["alpha=0.5"]["f1"] == 1.0

    def test_evaluate_with_metadata_filters(self, tmp_path, capsys):
        from shadowpipe.jsonl import write_jsonl
        from shadowpipe.models import ImageRecord

        truth = tmp_path / "truth"
        pred = tmp_path / "pred"
        truth.mkdir(), pred.mkdir()
        for name in ("day1", "night1"):
            (truth / f"{name}.txt").write_text("0 0.5 0.5 0.25 0.25\n")
        (pred / "day1.txt").write_text("0 0.5 0.5 0.25 0.25\n")  # hit
        (pred / "night1.txt").write_text("0 0.1 0.1 0.05 0.05\n")  # miss
        records = []
        for name, dn in (("day1", "day"), ("night1", "night")):
            records.append(ImageRecord(
                image_id=f"{name}.jpg", path=f"/x/{name}.jpg", width=200,
                height=200, captured_at=dt.datetime(2022, 3, 29),
                timestamp_source="exif",
                colorspace_class="color" if dn == "day" else "grayscale_ir",
                day_night=dn, keywords=("overcast",)).to_dict())
        images = tmp_path / "records.jsonl"
        write_jsonl(images, records)
        out = tmp_path / "report.json"
        code = cli.main([
            "evaluate", "--pred", str(pred), "--truth", str(truth),
            "--alpha", "0.5", "--images", str(images),
            "--filter", "day", "--filter", "night",
            "--filter", "keyword=overcast", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())["alpha=0.5"]
        assert report["tp"] == 1 and report["fp"] == 1 and report["fn"] == 1
        assert report["conditions"]["day"]["tp"] == 1
        assert report["conditions"]["night"]["tp"] == 0
        assert report["conditions"]["keyword=overcast"]["tp"] == 1

    def test_evaluate_filter_without_images_is_config_error(self, tmp_path,
                                                            capsys):
        d = tmp_path / "labels"
        d.mkdir()
        assert cli.main(["evaluate", "--pred", str(d), "--truth", str(d),
                         "--filter", "day"]) == 2
