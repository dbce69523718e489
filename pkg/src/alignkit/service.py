"""Annotation service: task state, durable journal, JSON API.

One process owns a set of annotation tasks (sentence pairs with
editable link sets). Every mutation is appended to a newline-delimited
JSON journal and flushed to disk before the request is acknowledged, so
a crashed session replays to exactly the acknowledged state. Alignment
updates replace the whole link set; a submitted task refuses further
edits.
"""

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .corpus import (
    AlignmentBoundsError,
    AlignmentSet,
    SentencePair,
    validate_links,
)
from .scoring import ScoreReport, score, score_span_restricted


@dataclass
class AnnotationTask:
    id: str
    pair: SentencePair
    links: AlignmentSet = field(default_factory=set)
    status: str = "pending"  # pending | submitted
    elapsed_ms: int = 0
    annotator: str = "default"

    def public_summary(self) -> dict:
        return {"id": self.id, "status": self.status,
                "n_source": self.pair.n_source,
                "n_target": self.pair.n_target}

    def public_detail(self) -> dict:
        return {"id": self.id,
                "source": list(self.pair.source),
                "target": list(self.pair.target),
                "links": sorted([i, j] for i, j in self.links),
                "status": self.status,
                "elapsed_ms": self.elapsed_ms,
                "annotator": self.annotator}


class TaskError(Exception):
    def __init__(self, status_code: int, detail: str):
        super().__init__(detail)
        self.status_code = status_code
        self.detail = detail


class TaskStore:
    """All task mutations funnel through one lock and one journal."""

    def __init__(self, tasks: Sequence[AnnotationTask], journal_path):
        self._lock = threading.Lock()
        self._tasks = {t.id: t for t in tasks}
        if len(self._tasks) != len(tasks):
            raise ValueError("duplicate task ids")
        self._journal_path = Path(journal_path)
        if self._journal_path.exists():
            self._replay()
        self._journal = open(self._journal_path, "a", encoding="utf-8")

    def _replay(self) -> None:
        with open(self._journal_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                task = self._tasks.get(event["task"])
                if task is None:
                    continue
                if event["event"] == "alignment":
                    task.links = {(i, j) for i, j in event["links"]}
                    task.elapsed_ms = max(task.elapsed_ms,
                                          int(event["elapsed_ms"]))
                elif event["event"] == "submit":
                    task.status = "submitted"

    def _journal_event(self, event: dict) -> None:
        # write-then-ack: the caller's response leaves only after this
        self._journal.write(json.dumps(event, sort_keys=True) + "\n")
        self._journal.flush()
        os.fsync(self._journal.fileno())

    def _get(self, task_id: str) -> AnnotationTask:
        task = self._tasks.get(task_id)
        if task is None:
            raise TaskError(404, f"unknown task {task_id!r}")
        return task

    def list_tasks(self) -> list[dict]:
        with self._lock:
            return [t.public_summary() for t in self._tasks.values()]

    def get_task(self, task_id: str) -> dict:
        with self._lock:
            return self._get(task_id).public_detail()

    def put_alignment(self, task_id: str, links: Sequence[Sequence[int]],
                      elapsed_ms: int) -> dict:
        with self._lock:
            task = self._get(task_id)
            if task.status == "submitted":
                raise TaskError(409, f"task {task_id!r} already submitted")
            if elapsed_ms < 0:
                raise TaskError(422, "elapsed_ms must be >= 0")
            try:
                link_set = {(int(i), int(j)) for i, j in links}
                validate_links(link_set, task.pair.n_source,
                               task.pair.n_target, where=f"task {task_id}")
            except (AlignmentBoundsError, TypeError, ValueError) as exc:
                raise TaskError(422, str(exc)) from exc
            self._journal_event({
                "event": "alignment", "task": task_id,
                "links": sorted([i, j] for i, j in link_set),
                "elapsed_ms": int(elapsed_ms),
                "ts": datetime.now(timezone.utc).isoformat(),
            })
            task.links = link_set
            task.elapsed_ms = max(task.elapsed_ms, int(elapsed_ms))
            return task.public_detail()

    def submit(self, task_id: str) -> dict:
        with self._lock:
            task = self._get(task_id)
            if task.status == "submitted":
                raise TaskError(409, f"task {task_id!r} already submitted")
            self._journal_event({
                "event": "submit", "task": task_id,
                "ts": datetime.now(timezone.utc).isoformat(),
            })
            task.status = "submitted"
            return task.public_detail()

    def close(self) -> None:
        self._journal.close()


def tasks_from_corpus(pairs: Sequence[SentencePair],
                      alignments: Sequence[AlignmentSet] | None = None,
                      annotator: str = "default") -> list[AnnotationTask]:
    if alignments is not None and len(alignments) != len(pairs):
        raise ValueError("one alignment set per pair required")
    tasks = []
    for k, pair in enumerate(pairs):
        links = set(alignments[k]) if alignments is not None else set()
        tasks.append(AnnotationTask(id=pair.id or str(k + 1), pair=pair,
                                    links=links, annotator=annotator))
    return tasks


def create_app(store: TaskStore, static_dir=None):
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel, Field

    class AlignmentBody(BaseModel):
        links: list[list[int]] = Field(default_factory=list)
        elapsed_ms: int = 0

    app = FastAPI(title="alignkit annotation service")

    @app.exception_handler(TaskError)
    async def task_error_handler(request: Request, exc: TaskError):
        return JSONResponse(status_code=exc.status_code,
                            content={"detail": exc.detail})

    @app.get("/api/tasks")
    def list_tasks():
        return store.list_tasks()

    @app.get("/api/tasks/{task_id}")
    def get_task(task_id: str):
        return store.get_task(task_id)

    @app.put("/api/tasks/{task_id}/alignment")
    def put_alignment(task_id: str, body: AlignmentBody):
        return store.put_alignment(task_id, body.links, body.elapsed_ms)

    @app.post("/api/tasks/{task_id}/submit")
    def submit(task_id: str):
        return store.submit(task_id)

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")
    return app


def annotator_report(journal_path, gold: Sequence[AlignmentSet],
                     pairs: Sequence[SentencePair],
                     source_spans: Sequence[set[int]] | None = None,
                     ) -> tuple[ScoreReport, float, int]:
    """Score submitted annotations against gold.

    Returns the report, the sentences-per-minute rate (submitted count
    over total elapsed time), and the submitted count. Only submitted
    tasks are scored; their gold sets are matched by corpus position.
    """
    by_id: dict[str, dict] = {}
    with open(journal_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            event = json.loads(line)
            entry = by_id.setdefault(event["task"],
                                     {"links": set(), "elapsed_ms": 0,
                                      "submitted": False})
            if event["event"] == "alignment":
                entry["links"] = {(i, j) for i, j in event["links"]}
                entry["elapsed_ms"] = max(entry["elapsed_ms"],
                                          int(event["elapsed_ms"]))
            elif event["event"] == "submit":
                entry["submitted"] = True

    predicted, gold_rows, spans, total_ms = [], [], [], 0
    for k, pair in enumerate(pairs):
        entry = by_id.get(pair.id)
        if entry is None or not entry["submitted"]:
            continue
        predicted.append(entry["links"])
        gold_rows.append(gold[k])
        total_ms += entry["elapsed_ms"]
        if source_spans is not None:
            spans.append(source_spans[k])
    if not predicted:
        raise ValueError("no submitted tasks in the journal")
    if source_spans is not None:
        report = score_span_restricted(predicted, gold_rows, spans)
    else:
        report = score(predicted, gold_rows)
    minutes = total_ms / 60000.0
    rate = len(predicted) / minutes if minutes > 0 else float("inf")
    return report, rate, len(predicted)
