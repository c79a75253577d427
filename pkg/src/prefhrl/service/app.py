"""HTTP surface for live preference annotation.

JSON endpoints:
    GET  /queries              all pending query pairs
    GET  /queries/{id}         one pending query, 404 if unknown or labeled
    POST /queries/{id}/label   body {"v": 0 | 0.5 | 1}
    GET  /status               pending count plus trainer status snapshot
The browser UI bundle, when built, is served statically under /ui.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import RedirectResponse
from fastapi.staticfiles import StaticFiles

from .bridge import AnnotationBridge
from .schemas import LabelBody, LabelResult, StatusView, WireQuery

DEFAULT_UI_DIR = Path(__file__).resolve().parents[3] / "frontend" / "dist"


def create_app(bridge: AnnotationBridge, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="prefhrl annotation service")

    @app.get("/queries", response_model=list[WireQuery])
    def list_queries():
        return bridge.pending_queries()

    @app.get("/queries/{query_id}", response_model=WireQuery)
    def get_query(query_id: str):
        query = bridge.get_query(query_id)
        if query is None:
            raise HTTPException(status_code=404, detail=f"unknown query {query_id!r}")
        return query

    @app.post("/queries/{query_id}/label", response_model=LabelResult)
    def label_query(query_id: str, body: LabelBody):
        try:
            status = bridge.submit_label(query_id, body.v)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown query {query_id!r}")
        return LabelResult(id=query_id, status=status)

    @app.get("/status", response_model=StatusView)
    def status():
        return StatusView(**bridge.status())

    ui = ui_dir if ui_dir is not None else DEFAULT_UI_DIR
    if ui.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui), html=True), name="ui")

        @app.get("/", include_in_schema=False)
        def root():
            return RedirectResponse(url="/ui/")

    return app


def serve_in_thread(bridge: AnnotationBridge, port: int,
                    ui_dir: Optional[Path] = None):
    """Run the service on a daemon thread; returns the uvicorn server handle."""
    import uvicorn

    app = create_app(bridge, ui_dir=ui_dir)
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    return server, thread
