"""HTTP annotation service over a dataset manifest.

Endpoints (JSON unless noted):

    GET  /api/tiles                    tile listing for the browser UI
    GET  /api/tiles/{id}/image         the tile PNG
    GET  /api/tiles/{id}/annotations   points, label, revision
    PUT  /api/tiles/{id}/annotations   replace annotations (optimistic)
    GET  /                             the bundled annotation UI, if present

Reads never take a lock: they work off an immutable manifest snapshot that
writers swap atomically. A PUT must echo the revision it read, otherwise
the service answers 409 and the client has to reload. Accepted writes
persist the whole manifest atomically before the response goes out, so a
crash at any moment leaves a readable manifest.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, HTMLResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .manifest import DatasetManifest, load_manifest, save_manifest, updated_annotations
from .raster import Label, Point

_PLACEHOLDER = """<!doctype html>
<html><head><title>cownter annotation service</title></head>
<body><h1>cownter annotation service</h1>
<p>No UI bundle is installed. The JSON API lives under <code>/api/tiles</code>.</p>
</body></html>"""


class PointBody(BaseModel):
    x: float
    y: float


class AnnotationBody(BaseModel):
    points: list[PointBody]
    label: str
    revision: int


def _tile_summary(t) -> dict:
    # a tile counts as labeled once it carries points or an annotator has
    # saved it at least once (confirming "no cow" bumps the revision)
    return {
        "id": t.id,
        "labeled": bool(t.points) or t.revision > 0,
        "count": t.count,
        "label": t.label.value,
        "split": t.split,
        "revision": t.revision,
        "width": t.width,
        "height": t.height,
    }


def create_app(
    manifest_path: str | Path, static_dir: str | Path | None = None
) -> FastAPI:
    """Build the service around one manifest directory.

    Args:
        manifest_path: Manifest file or the directory containing it.
        static_dir: Optional built UI bundle; its index.html is served at /.
    """
    snapshot: dict[str, DatasetManifest] = {"manifest": load_manifest(manifest_path)}
    write_lock = threading.Lock()
    app = FastAPI(title="cownter annotation service")

    @app.exception_handler(RequestValidationError)
    async def _malformed_body(request, exc):
        # malformed input is a client data problem, not an unprocessable
        # entity: keep every validation failure on 400
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/api/tiles")
    def list_tiles():
        return [_tile_summary(t) for t in snapshot["manifest"].tiles]

    @app.get("/api/tiles/{tile_id}/image")
    def tile_image(tile_id: str):
        m = snapshot["manifest"]
        tile = m.tile_by_id(tile_id)
        if tile is None:
            return JSONResponse(status_code=404, content={"detail": "unknown tile id"})
        return Response(content=(m.root / tile.image).read_bytes(), media_type="image/png")

    @app.get("/api/tiles/{tile_id}/annotations")
    def get_annotations(tile_id: str):
        tile = snapshot["manifest"].tile_by_id(tile_id)
        if tile is None:
            return JSONResponse(status_code=404, content={"detail": "unknown tile id"})
        return {
            "points": [{"x": p.x, "y": p.y} for p in tile.points],
            "label": tile.label.value,
            "revision": tile.revision,
            "width": tile.width,
            "height": tile.height,
        }

    @app.put("/api/tiles/{tile_id}/annotations")
    def put_annotations(tile_id: str, body: AnnotationBody):
        try:
            label = Label(body.label)
        except ValueError:
            return JSONResponse(
                status_code=400, content={"detail": f"unknown label {body.label!r}"}
            )
        points = tuple(Point(p.x, p.y) for p in body.points)
        with write_lock:
            current = snapshot["manifest"]
            tile = current.tile_by_id(tile_id)
            if tile is None:
                return JSONResponse(status_code=404, content={"detail": "unknown tile id"})
            if body.revision != tile.revision:
                return JSONResponse(
                    status_code=409,
                    content={
                        "detail": "revision mismatch: tile changed since it was read",
                        "revision": tile.revision,
                    },
                )
            updated = updated_annotations(tile, points, label)
            bad = updated.violations()
            if bad:
                return JSONResponse(status_code=400, content={"detail": "; ".join(bad)})
            tiles = [updated if t.id == tile_id else t for t in current.tiles]
            next_manifest = DatasetManifest(current.root, tiles, current.version)
            try:
                save_manifest(next_manifest)
            except OSError as exc:
                return JSONResponse(
                    status_code=500, content={"detail": f"could not persist: {exc}"}
                )
            snapshot["manifest"] = next_manifest
            return {"revision": updated.revision}

    index_file = None
    if static_dir is not None:
        static_dir = Path(static_dir)
        candidate = static_dir / "index.html"
        if candidate.is_file():
            index_file = candidate
            app.mount("/assets", StaticFiles(directory=static_dir), name="assets")

    @app.get("/")
    def index():
        if index_file is not None:
            return FileResponse(index_file)
        return HTMLResponse(_PLACEHOLDER)

    return app


def serve(
    manifest_path: str | Path,
    host: str = "127.0.0.1",
    port: int = 8008,
    static_dir: str | Path | None = None,
) -> None:
    """Run the service until interrupted (used by the CLI)."""
    import uvicorn

    app = create_app(manifest_path, static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
