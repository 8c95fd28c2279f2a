"""Run ledger: append-only stage records flushed to disk after every stage.

The ledger is what makes runs resumable: it is a jsonl file whose first line
snapshots the run (id + config) and whose remaining lines are stage records.
Completed records are never mutated; re-executed stages append new records.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import LedgerConflict, NotFound
from .jsonl import atomic_write_text

LEDGER_NAME = "ledger.jsonl"


def _now() -> str:
    return dt.datetime.now().isoformat(timespec="microseconds")


@dataclass
class StageRecord:
    stage: str
    instance: str
    started_at: str
    finished_at: str
    status: str  # completed | failed
    artifact_paths: list[str] = field(default_factory=list)
    record_counts: dict = field(default_factory=dict)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "type": "stage",
            "stage": self.stage,
            "instance": self.instance,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "status": self.status,
            "artifact_paths": list(self.artifact_paths),
            "record_counts": dict(self.record_counts),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StageRecord":
        return cls(
            stage=d["stage"], instance=d["instance"],
            started_at=d["started_at"], finished_at=d["finished_at"],
            status=d["status"], artifact_paths=list(d["artifact_paths"]),
            record_counts=dict(d["record_counts"]), error=d.get("error"),
        )


@dataclass
class RunLedger:
    run_id: str
    config_snapshot: dict
    started_at: str
    records: list[StageRecord] = field(default_factory=list)

    @classmethod
    def new(cls, config_snapshot: dict) -> "RunLedger":
        digest = hashlib.sha1(
            json.dumps(config_snapshot, sort_keys=True).encode()).hexdigest()
        return cls(run_id=f"run_{digest[:12]}", config_snapshot=config_snapshot,
                   started_at=_now())

    def append(self, record: StageRecord) -> None:
        self.records.append(record)

    def latest(self, instance: str) -> Optional[StageRecord]:
        for record in reversed(self.records):
            if record.instance == instance:
                return record
        return None

    def completed(self, instance: str) -> bool:
        record = self.latest(instance)
        return record is not None and record.status == "completed"

    def save(self, run_dir: Path) -> None:
        lines = [json.dumps({
            "type": "run",
            "run_id": self.run_id,
            "started_at": self.started_at,
            "config_snapshot": self.config_snapshot,
        }, separators=(", ", ": "))]
        lines += [json.dumps(r.to_dict(), separators=(", ", ": "))
                  for r in self.records]
        atomic_write_text(Path(run_dir) / LEDGER_NAME,
                          "".join(line + "\n" for line in lines))

    @classmethod
    def load(cls, run_dir: Path) -> "RunLedger":
        path = Path(run_dir) / LEDGER_NAME
        if not path.exists():
            raise NotFound(f"no ledger at {path}")
        records = []
        header = None
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                if doc.get("type") == "run":
                    header = doc
                elif doc.get("type") == "stage":
                    records.append(StageRecord.from_dict(doc))
        if header is None:
            raise LedgerConflict(f"{path} has no run header")
        return cls(run_id=header["run_id"],
                   config_snapshot=header["config_snapshot"],
                   started_at=header["started_at"], records=records)
