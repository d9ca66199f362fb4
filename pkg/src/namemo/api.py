"""HTTP + WebSocket service for the teacher dashboard.

Serves the latest versioned snapshot, per-student profiles, the call log,
and consent control, plus a push channel that announces each new snapshot
version. Binds to loopback by default; when a shared token is configured,
every POST must carry it in X-NaMemo-Token.

Privacy guarantees enforced here: no response ever contains embeddings or
tile pixels, and an opted-out student is indistinguishable from an unknown
one on every endpoint.
"""

from __future__ import annotations

import asyncio
import io
import threading
from dataclasses import dataclass

from fastapi import FastAPI, Header, HTTPException, Request, Response, WebSocket
from fastapi.responses import JSONResponse

from .errors import UnknownId
from .gallery import Consent
from .session import Session, Snapshot

HEARTBEAT_S = 15.0
STALL_TIMEOUT_S = 60.0
SUBSCRIBER_QUEUE_MAX = 32


@dataclass
class Subscriber:
    queue: asyncio.Queue
    loop: asyncio.AbstractEventLoop
    dropped: bool = False


class EventHub:
    """Fans snapshot events out to WebSocket subscribers.

    Publishes come from the session's cycle thread; each subscriber gets a
    bounded queue on its own event loop. A full queue marks the subscriber
    dropped instead of buffering without limit.
    """

    def __init__(self, queue_max: int = SUBSCRIBER_QUEUE_MAX):
        self._queue_max = queue_max
        self._subscribers: list[Subscriber] = []
        self._lock = threading.Lock()

    def attach(self) -> Subscriber:
        sub = Subscriber(asyncio.Queue(maxsize=self._queue_max),
                         asyncio.get_running_loop())
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def detach(self, sub: Subscriber) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def publish(self, message: dict) -> None:
        with self._lock:
            targets = list(self._subscribers)
        for sub in targets:
            sub.loop.call_soon_threadsafe(self._offer, sub, message)

    @staticmethod
    def _offer(sub: Subscriber, message: dict) -> None:
        try:
            sub.queue.put_nowait(message)
        except asyncio.QueueFull:
            sub.dropped = True


async def pump_events(ws, sub: Subscriber, heartbeat_s: float = HEARTBEAT_S,
                      stall_timeout_s: float = STALL_TIMEOUT_S) -> None:
    """Forward queued events to one socket; ping when idle; drop stalled peers."""
    while True:
        if sub.dropped:
            await ws.close(code=1008)
            return
        try:
            message = await asyncio.wait_for(sub.queue.get(), timeout=heartbeat_s)
        except asyncio.TimeoutError:
            message = {"type": "ping"}
        try:
            await asyncio.wait_for(ws.send_json(message), timeout=stall_timeout_s)
        except asyncio.TimeoutError:
            await ws.close(code=1008)
            return


def snapshot_view(snap: Snapshot) -> dict:
    annotations = []
    for box, res in snap.annotations:
        entry = {
            "box": {"x": box.x, "y": box.y, "w": box.w, "h": box.h},
            "band": res.band.value,
            "confidence": res.confidence,
        }
        if res.student_id is not None:
            entry["student_id"] = res.student_id
            entry["display_name"] = snap.display_names.get(
                res.student_id, res.student_id)
        annotations.append(entry)
    return {
        "version": snap.version,
        "published_at": snap.published_at,
        "panorama_url": f"/api/v1/panorama.png?version={snap.version}",
        "annotations": annotations,
        "stats": snap.stats,
    }


def create_app(session: Session, token: str = "",
               heartbeat_s: float = HEARTBEAT_S,
               stall_timeout_s: float = STALL_TIMEOUT_S,
               ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="namemo", docs_url=None, redoc_url=None)
    hub = EventHub()
    png_cache: dict[int, bytes] = {}
    png_lock = threading.Lock()

    session.subscribe(lambda snap: hub.publish(
        {"type": "snapshot", "version": snap.version}))
    app.state.hub = hub

    def require_token(provided: str | None) -> None:
        if token and provided != token:
            raise HTTPException(status_code=401, detail="missing or bad token")

    @app.get("/api/v1/state")
    def get_state(request: Request):
        snap = session.latest
        if snap is None:
            raise HTTPException(status_code=503, detail="no snapshot yet")
        etag = f'"{snap.version}"'
        if request.headers.get("if-none-match", "").strip() in (etag, str(snap.version)):
            return Response(status_code=304, headers={"ETag": etag})
        return JSONResponse(snapshot_view(snap), headers={"ETag": etag})

    @app.get("/api/v1/panorama.png")
    def get_panorama(version: int | None = None):
        snap = session.latest if version is None else session.get_snapshot(version)
        if snap is None:
            code = 503 if version is None else 404
            raise HTTPException(status_code=code, detail="version not retained")
        with png_lock:
            data = png_cache.get(snap.version)
            if data is None:
                from PIL import Image

                buf = io.BytesIO()
                Image.fromarray(snap.panorama.pixels).save(buf, format="PNG")
                data = buf.getvalue()
                png_cache[snap.version] = data
                live = {s.version for s in [session.latest] if s}
                for v in list(png_cache):
                    if session.get_snapshot(v) is None and v not in live:
                        del png_cache[v]
        return Response(content=data, media_type="image/png")

    @app.get("/api/v1/students/{student_id}")
    def get_student(student_id: str):
        rec = session.gallery.visible_profile(student_id)
        if rec is None:
            raise HTTPException(status_code=404, detail="unknown student")
        return {"student_id": rec.student_id, "display_name": rec.display_name,
                "profile": rec.profile}

    @app.post("/api/v1/call-log", status_code=201)
    def post_call(body: dict, x_namemo_token: str | None = Header(default=None)):
        require_token(x_namemo_token)
        student_id = body.get("student_id")
        if not isinstance(student_id, str):
            raise HTTPException(status_code=422, detail="student_id required")
        try:
            position = session.record_call(student_id, note=body.get("note"))
        except UnknownId:
            raise HTTPException(status_code=404, detail="unknown student")
        return {"position": position}

    @app.get("/api/v1/call-log")
    def get_call_log():
        return {"events": [
            {"timestamp": e.timestamp, "student_id": e.student_id,
             "source": e.source, "note": e.note}
            for e in session.call_log]}

    @app.post("/api/v1/consent")
    def post_consent(body: dict, x_namemo_token: str | None = Header(default=None)):
        require_token(x_namemo_token)
        student_id = body.get("student_id")
        consent = body.get("consent")
        if not isinstance(student_id, str) or consent not in ("enrolled", "opted_out"):
            raise HTTPException(status_code=422, detail="need student_id and consent")
        try:
            version = session.gallery.set_consent(student_id, Consent(consent))
        except UnknownId:
            raise HTTPException(status_code=404, detail="unknown student")
        return {"gallery_version": version}

    @app.websocket("/api/v1/events")
    async def events(ws: WebSocket):
        await ws.accept()
        sub = hub.attach()
        try:
            await pump_events(ws, sub, heartbeat_s, stall_timeout_s)
        except Exception:
            pass  # client went away; nothing to clean beyond detach
        finally:
            hub.detach(sub)

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(session: Session, host: str = "127.0.0.1", port: int = 8000,
          token: str = "", ui_dir: str | None = None) -> None:
    """Run the API under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(session, token=token, ui_dir=ui_dir),
                host=host, port=port, log_level="warning")
