"""Crowd-vote bookkeeping: task publication, tallies, and the JSON export.

Votes live in a sqlite database so concurrent recording stays transactional.
A saved export can be replayed later, which is how automated runs get their
"human" votes.
"""

from __future__ import annotations

import math
import random
import sqlite3
import threading
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import InvalidChoice, MissingCrop, SchemaError, UnknownTask
from .models import DedupGroup, Detection, VoteTally, VoteTask

EXPORT_SCHEMA_VERSION = 1


def task_id_for(crop_id: str) -> str:
    return f"t_{crop_id}"


def build_tasks(
    groups: Iterable[DedupGroup],
    detections: Iterable[Detection],
    crop_files: dict[str, str],
    classes: Sequence[str],
    crops_with_regions: Optional[set[str]] = None,
    min_votes: int = 3,
) -> list[VoteTask]:
    """One task per group representative whose crop has something to judge.

    'Something to judge' means at least one detection or one segmentation
    region on any member of the group.
    """
    detected: set[str] = {
        d.subject for d in detections if d.subject_kind == "crop"}
    if crops_with_regions is None:
        crops_with_regions = set(crop_files)
    choices = [c for c in classes if c != "nothing"] + ["nothing"]
    tasks = []
    for group in sorted(groups, key=lambda g: g.group_id):
        interesting = any(
            m in detected or m in crops_with_regions for m in group.members)
        if not interesting:
            continue
        rep = group.representative
        if rep not in crop_files or not Path(crop_files[rep]).exists():
            raise MissingCrop(f"crop file for '{rep}' not found")
        tasks.append(VoteTask(
            task_id=task_id_for(rep),
            crop_id=rep,
            image_ref=crop_files[rep],
            choices=list(choices),
            min_votes=min_votes,
        ))
    return tasks


class VoteStore:
    """Sqlite-backed tasks + votes with per-task transactional tallies."""

    def __init__(self, db_path: Path | str):
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(str(db_path), check_same_thread=False)
        self._conn.execute(
            "CREATE TABLE IF NOT EXISTS tasks ("
            " task_id TEXT PRIMARY KEY, crop_id TEXT NOT NULL,"
            " image_ref TEXT NOT NULL, choices TEXT NOT NULL,"
            " min_votes INTEGER NOT NULL)")
        self._conn.execute(
            "CREATE TABLE IF NOT EXISTS votes ("
            " task_id TEXT NOT NULL, voter_token TEXT NOT NULL,"
            " choice TEXT NOT NULL,"
            " PRIMARY KEY (task_id, voter_token))")
        self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    def publish(self, tasks: Iterable[VoteTask]) -> int:
        """Insert tasks; already-published ids are left untouched (idempotent).
        Returns the number of new rows."""
        with self._lock, self._conn:
            before = self._conn.execute("SELECT COUNT(*) FROM tasks").fetchone()[0]
            for t in tasks:
                self._conn.execute(
                    "INSERT OR IGNORE INTO tasks VALUES (?, ?, ?, ?, ?)",
                    (t.task_id, t.crop_id, t.image_ref, "\x1f".join(t.choices),
                     t.min_votes))
            after = self._conn.execute("SELECT COUNT(*) FROM tasks").fetchone()[0]
        return after - before

    def _task_row(self, task_id: str):
        row = self._conn.execute(
            "SELECT task_id, crop_id, image_ref, choices, min_votes "
            "FROM tasks WHERE task_id = ?", (task_id,)).fetchone()
        if row is None:
            raise UnknownTask(f"no task '{task_id}'")
        return row

    def get_task(self, task_id: str) -> VoteTask:
        row = self._task_row(task_id)
        return VoteTask(row[0], row[1], row[2], row[3].split("\x1f"), row[4])

    def task_ids(self) -> list[str]:
        return [r[0] for r in self._conn.execute(
            "SELECT task_id FROM tasks ORDER BY task_id")]

    def record_vote(self, task_id: str, choice: str, voter_token: str) -> VoteTally:
        """Upsert this voter's choice and return the fresh tally."""
        with self._lock, self._conn:
            task = self.get_task(task_id)
            if choice not in task.choices:
                raise InvalidChoice(
                    f"'{choice}' is not a choice of task '{task_id}'")
            self._conn.execute(
                "INSERT INTO votes VALUES (?, ?, ?) "
                "ON CONFLICT (task_id, voter_token) DO UPDATE SET choice = ?",
                (task_id, voter_token, choice, choice))
        return self.tally(task_id)

    def tally(self, task_id: str) -> VoteTally:
        task = self.get_task(task_id)
        counts = {c: 0 for c in task.choices}
        for choice, n in self._conn.execute(
                "SELECT choice, COUNT(*) FROM votes WHERE task_id = ? "
                "GROUP BY choice", (task_id,)):
            counts[choice] = n
        counts = {c: n for c, n in counts.items() if n > 0}
        return VoteTally(task_id=task_id, counts=counts, min_votes=task.min_votes)

    def tallies(self) -> list[VoteTally]:
        return [self.tally(task_id) for task_id in self.task_ids()]

    def next_task(self, voter_token: str) -> Optional[VoteTask]:
        """The incomplete task with the fewest votes that this voter has not
        judged yet; ties break randomly but reproducibly per session."""
        candidates = []
        for task_id in self.task_ids():
            tally = self.tally(task_id)
            if tally.complete:
                continue
            voted = self._conn.execute(
                "SELECT 1 FROM votes WHERE task_id = ? AND voter_token = ?",
                (task_id, voter_token)).fetchone()
            if voted:
                continue
            tiebreak = random.Random(f"{voter_token}|{task_id}").random()
            candidates.append((tally.total_votes, tiebreak, task_id))
        if not candidates:
            return None
        candidates.sort()
        return self.get_task(candidates[0][2])

    def progress(self) -> dict:
        total = len(self.task_ids())
        complete = sum(1 for t in self.tallies() if t.complete)
        return {"total": total, "complete": complete,
                "incomplete": total - complete}

    def snapshot(self) -> list[tuple[VoteTask, VoteTally]]:
        """All tasks with their tallies, read under the write lock so an
        export never interleaves with a vote."""
        with self._lock:
            return [(self.get_task(task_id), self.tally(task_id))
                    for task_id in self.task_ids()]


def integer_percentages(fractions: dict[str, float]) -> dict[str, int]:
    """Half-up integer percentages nudged to sum to 100, the leftover going
    to the largest fraction (ties: lexicographically first choice)."""
    if not fractions:
        return {}
    rounded = {c: int(math.floor(f * 100 + 0.5)) for c, f in fractions.items()}
    drift = 100 - sum(rounded.values())
    if drift != 0:
        target = max(sorted(fractions), key=lambda c: fractions[c])
        rounded[target] += drift
    return rounded


def export_results(store: VoteStore) -> dict:
    """Snapshot every task's votes; incomplete tasks are flagged, not dropped."""
    tasks = []
    for task, tally in store.snapshot():
        task_id = task.task_id
        fractions = tally.fractions
        tasks.append({
            "task_id": task_id,
            "crop_id": task.crop_id,
            "min_votes": task.min_votes,
            "total_votes": tally.total_votes,
            "complete": tally.complete,
            "counts": {c: tally.counts[c] for c in sorted(tally.counts)},
            "percentages": {
                c: p for c, p in sorted(integer_percentages(fractions).items())},
            "fractions": {c: round(f, 6) for c, f in sorted(fractions.items())},
        })
    return {"schema_version": EXPORT_SCHEMA_VERSION, "tasks": tasks}


def import_results(doc: dict) -> list[VoteTally]:
    """Rebuild tallies from an export document."""
    if not isinstance(doc, dict):
        raise SchemaError("export document must be an object")
    for field in ("schema_version", "tasks"):
        if field not in doc:
            raise SchemaError(f"missing field '{field}'")
    tallies = []
    for i, entry in enumerate(doc["tasks"]):
        for field in ("task_id", "crop_id", "total_votes", "counts",
                      "min_votes", "complete"):
            if field not in entry:
                raise SchemaError(f"task {i}: missing field '{field}'")
        counts = {c: int(n) for c, n in entry["counts"].items()}
        if sum(counts.values()) != entry["total_votes"]:
            raise SchemaError(
                f"task {i}: counts sum to {sum(counts.values())}, "
                f"total_votes says {entry['total_votes']}")
        tallies.append(VoteTally(
            task_id=entry["task_id"], counts=counts,
            min_votes=entry["min_votes"]))
    return tallies
