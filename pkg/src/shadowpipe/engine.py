"""Stage sequencing: fresh runs, resume-from-a-stage, and run inspection.

The ledger is flushed after every stage, so a run killed between stages can
always pick up where it left off. Resume refuses to continue under a config
that no longer matches the one the run started with.
"""

from __future__ import annotations

import datetime as dt
import logging
import shutil
from pathlib import Path
from typing import Optional

from .config import PipelineConfig
from .errors import LedgerConflict, NotFound, StageError
from .ledger import LEDGER_NAME, RunLedger, StageRecord
from .stages import STAGE_SPECS, StageContext

log = logging.getLogger("shadowpipe")


def _now() -> str:
    return dt.datetime.now().isoformat(timespec="microseconds")


def run_pipeline(
    config: PipelineConfig,
    resume_from: Optional[str] = None,
    stop_after: Optional[str] = None,
) -> RunLedger:
    """Execute the configured stages in order.

    resume_from re-executes from that stage instance onward, requiring every
    earlier stage to be completed under an identical config snapshot.
    stop_after ends the run cleanly after the named instance (the part-1 /
    part-2 split around human voting).
    """
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    instances = [m.instance for m in config.modules]
    for name in (resume_from, stop_after):
        if name is not None and name not in instances:
            raise LedgerConflict(f"'{name}' is not a configured stage instance")

    if resume_from is not None:
        ledger = RunLedger.load(run_dir)
        if ledger.config_snapshot != config.snapshot:
            raise LedgerConflict(
                "config does not match the run's config snapshot; resume "
                "needs the identical configuration")
        start = instances.index(resume_from)
        for earlier in instances[:start]:
            if not ledger.completed(earlier):
                raise LedgerConflict(
                    f"cannot resume from '{resume_from}': stage '{earlier}' "
                    f"has not completed")
    else:
        if (run_dir / LEDGER_NAME).exists():
            raise LedgerConflict(
                f"{run_dir} already contains a run; use `resume` or pick a "
                f"fresh run_dir")
        ledger = RunLedger.new(config.snapshot)
        ledger.save(run_dir)
        start = 0

    for module in config.modules[start:]:
        spec = STAGE_SPECS[module.stage]
        position = instances.index(module.instance)
        ctx = StageContext(
            input_dir=Path(config.input_dir),
            file_extensions=config.file_extensions,
            run_dir=run_dir,
            instance=module.instance,
            params=module.params,
            preceding=[(m.stage, m.instance) for m in config.modules[:position]],
        )
        stage_dir = ctx.stage_dir
        if stage_dir.exists():
            shutil.rmtree(stage_dir)
        stage_dir.mkdir(parents=True)

        started = _now()
        log.info("stage %s: started", module.instance)
        try:
            result = spec.runner(ctx)
        except Exception as exc:
            ledger.append(StageRecord(
                stage=module.stage, instance=module.instance,
                started_at=started, finished_at=_now(), status="failed",
                error=f"{type(exc).__name__}: {exc}",
            ))
            ledger.save(run_dir)
            log.error("stage %s: failed: %s", module.instance, exc)
            raise StageError(module.instance, str(exc)) from exc

        ledger.append(StageRecord(
            stage=module.stage, instance=module.instance,
            started_at=started, finished_at=_now(), status="completed",
            artifact_paths=sorted(
                p.relative_to(run_dir).as_posix() for p in result.artifacts),
            record_counts=result.record_counts,
        ))
        ledger.save(run_dir)
        log.info("stage %s: completed %s", module.instance, result.record_counts)
        if stop_after == module.instance:
            break
    return ledger


def _tree_size(path: Path) -> int:
    if path.is_file():
        return path.stat().st_size
    if path.is_dir():
        return sum(p.stat().st_size for p in path.rglob("*") if p.is_file())
    return 0


def describe_run(run_dir: Path) -> str:
    """Human-readable run summary: one line per stage instance."""
    run_dir = Path(run_dir)
    if not (run_dir / LEDGER_NAME).exists():
        raise NotFound(f"no run ledger in {run_dir}")
    ledger = RunLedger.load(run_dir)
    lines = [f"run {ledger.run_id} started {ledger.started_at}"]
    seen: list[str] = []
    for record in ledger.records:
        if record.instance not in seen:
            seen.append(record.instance)
    for instance in seen:
        record = ledger.latest(instance)
        size = _tree_size(run_dir / instance)
        counts = ", ".join(f"{k}={v}" for k, v in record.record_counts.items())
        line = (f"  {instance:<26} {record.status:<10} "
                f"[{counts or '-'}] {size / 1024:.1f} KiB")
        if record.status == "failed":
            line += f"  error: {record.error}"
        lines.append(line)
    return "\n".join(lines)
