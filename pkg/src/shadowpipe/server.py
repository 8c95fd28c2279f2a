"""HTTP service serving vote tasks to humans (the stage-7 review surface)."""

from __future__ import annotations

import secrets
from pathlib import Path
from typing import Optional

from fastapi import Cookie, FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .crowd import VoteStore, export_results
from .errors import InvalidChoice, UnknownTask
from .models import VoteTask

VOTER_COOKIE = "shadowpipe_voter"


class VotePayload(BaseModel):
    task_id: str
    choice: str


class TaskPayload(BaseModel):
    task_id: str
    crop_id: str
    image_ref: str
    choices: list[str]
    min_votes: int = 3


def create_app(store: VoteStore, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="shadowpipe voting service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )

    def voter_or_new(response: Response, token: Optional[str]) -> str:
        if not token:
            token = secrets.token_hex(16)
            response.set_cookie(VOTER_COOKIE, token, httponly=True)
        return token

    @app.post("/api/tasks")
    def publish(tasks: list[TaskPayload]):
        added = store.publish([
            VoteTask(t.task_id, t.crop_id, t.image_ref, t.choices, t.min_votes)
            for t in tasks
        ])
        return {"published": added}

    @app.get("/api/tasks/next")
    def next_task(
        response: Response,
        voter: Optional[str] = Cookie(default=None, alias=VOTER_COOKIE),
    ):
        token = voter_or_new(response, voter)
        task = store.next_task(token)
        progress = store.progress()
        if task is None:
            return {"done": True, "progress": progress}
        return {
            "done": False,
            "task_id": task.task_id,
            "image_url": f"/api/images/{task.crop_id}",
            "choices": task.choices,
            "progress": progress,
        }

    @app.get("/api/images/{crop_id}")
    def image(crop_id: str):
        try:
            task = store.get_task(f"t_{crop_id}")
        except UnknownTask:
            raise HTTPException(status_code=404, detail="unknown crop")
        path = Path(task.image_ref)
        if not path.exists():
            raise HTTPException(status_code=404, detail="crop file missing")
        return FileResponse(path)

    @app.post("/api/votes")
    def vote(
        payload: VotePayload,
        response: Response,
        voter: Optional[str] = Cookie(default=None, alias=VOTER_COOKIE),
    ):
        token = voter_or_new(response, voter)
        try:
            tally = store.record_vote(payload.task_id, payload.choice, token)
        except UnknownTask as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except InvalidChoice as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "counted": True,
            "task_id": payload.task_id,
            "total_votes": tally.total_votes,
            "complete": tally.complete,
        }

    @app.get("/api/export")
    def export():
        return JSONResponse(export_results(store))

    @app.get("/api/progress")
    def progress():
        return store.progress()

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
