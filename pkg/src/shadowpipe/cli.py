"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import (
    LedgerConflict, NotFound, ParseError, ShadowPipeError, StageError,
    ValidationError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shadowpipe",
        description="Camera-trap image labeling pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a configured pipeline")
    run.add_argument("-c", "--config", required=True, type=Path)
    run.add_argument("--until", metavar="STAGE", default=None,
                     help="stop cleanly after this stage instance")

    resume = sub.add_parser("resume", help="re-execute from a stage onward")
    resume.add_argument("-c", "--config", required=True, type=Path)
    resume.add_argument("--from", dest="from_stage", required=True,
                        metavar="STAGE")
    resume.add_argument("--until", metavar="STAGE", default=None)

    status = sub.add_parser("status", help="summarize a run directory")
    status.add_argument("run_dir", type=Path)

    evaluate = sub.add_parser(
        "evaluate", help="score predicted labels against ground truth")
    evaluate.add_argument("--pred", required=True, type=Path,
                          help="directory of predicted YOLO label files")
    evaluate.add_argument("--truth", required=True, type=Path,
                          help="directory of ground-truth YOLO label files")
    evaluate.add_argument("--alpha", default="0.5",
                          help="IoU threshold(s), comma separated")
    evaluate.add_argument("--images", type=Path, default=None,
                          help="stage-1 records.jsonl (dims + metadata filters)")
    evaluate.add_argument("--filter", action="append", default=[],
                          help="day | night | keyword=<k> (repeatable)")
    evaluate.add_argument("--out", type=Path, default=None,
                          help="write the report JSON here")

    serve = sub.add_parser("serve", help="run the crowd-voting service")
    serve.add_argument("--run", dest="run_dir", required=True, type=Path)
    serve.add_argument("--listen", default="127.0.0.1:8000",
                       help="address:port to bind")
    serve.add_argument("--ui-dir", type=Path, default=None,
                       help="serve a built voting UI from this directory")
    return parser


def cmd_run(args) -> int:
    from .engine import run_pipeline

    config = load_config(args.config)
    run_pipeline(config, stop_after=args.until)
    print(f"run complete: {config.run_dir}")
    return EXIT_OK


def cmd_resume(args) -> int:
    from .engine import run_pipeline

    config = load_config(args.config)
    run_pipeline(config, resume_from=args.from_stage, stop_after=args.until)
    print(f"resume complete: {config.run_dir}")
    return EXIT_OK


def cmd_status(args) -> int:
    from .engine import describe_run

    print(describe_run(args.run_dir))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluate import evaluate_images, load_label_dir
    from .jsonl import read_jsonl, write_json
    from .models import ImageRecord

    records = None
    dims = None
    if args.images:
        records = {}
        for doc in read_jsonl(args.images):
            rec = ImageRecord.from_dict(doc)
            key = str(Path(rec.image_id).with_suffix(""))
            records[key] = rec
        dims = {k: (r.width, r.height) for k, r in records.items()}
    elif args.filter:
        print("--filter needs --images (stage-1 records.jsonl)", file=sys.stderr)
        return EXIT_CONFIG

    preds = load_label_dir(args.pred, dims)
    truths = load_label_dir(args.truth, dims)
    image_ids = sorted(set(preds) | set(truths))
    per_image = {
        i: (preds.get(i, []), [r for r, _ in truths.get(i, [])])
        for i in image_ids
    }

    report_doc = {}
    for alpha_text in args.alpha.split(","):
        alpha = float(alpha_text)
        if not (0.0 < alpha <= 1.0):
            print(f"alpha {alpha} outside (0, 1]", file=sys.stderr)
            return EXIT_CONFIG
        report = evaluate_images(per_image, alpha, records, args.filter)
        report_doc[f"alpha={alpha:g}"] = report.to_dict()
        print(f"alpha={alpha:g}: tp={report.tp} fp={report.fp} fn={report.fn} "
              f"precision={report.precision:.3f} recall={report.recall:.3f} "
              f"f1={report.f1:.3f}")
        for name, sub_report in sorted(report.sub_reports.items()):
            print(f"  [{name}] tp={sub_report.tp} fp={sub_report.fp} "
                  f"fn={sub_report.fn} precision={sub_report.precision:.3f} "
                  f"recall={sub_report.recall:.3f} f1={sub_report.f1:.3f}")
    if args.out:
        write_json(args.out, report_doc)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .crowd import VoteStore
    from .models import VoteTask
    from .jsonl import read_jsonl
    from .server import create_app
    from .stages import VOTES_DB

    run_dir = Path(args.run_dir)
    tasks_files = sorted(run_dir.glob("evaluation*/tasks.jsonl"))
    if not tasks_files:
        print(f"no published tasks under {run_dir}; run the pipeline through "
              f"its evaluation stage first", file=sys.stderr)
        return EXIT_CONFIG
    store = VoteStore(run_dir / VOTES_DB)
    total = 0
    for tasks_file in tasks_files:
        total += store.publish(
            VoteTask.from_dict(d) for d in read_jsonl(tasks_file))
    print(f"serving {store.progress()['total']} task(s) ({total} new)")
    host, _, port = args.listen.rpartition(":")
    uvicorn.run(create_app(store, ui_dir=args.ui_dir),
                host=host or "127.0.0.1", port=int(port))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "resume": cmd_resume,
        "status": cmd_status,
        "evaluate": cmd_evaluate,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except (ParseError, ValidationError, LedgerConflict, NotFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except ShadowPipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
