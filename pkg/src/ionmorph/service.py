"""HTTP annotation backend: serves rendered ion images, persists labels.

Every accepted label is appended to the newline-delimited JSON manifest and
fsync'd before the response returns, so a crash can only ever lose nothing
and never tear a record. Appends go through a single lock; a lock file
guards against a second service writing the same manifest.
"""

from __future__ import annotations

import base64
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import FileResponse, HTMLResponse, PlainTextResponse, JSONResponse

from .classes import STRUCTURAL_CLASSES, is_valid_class
from .errors import ManifestLocked
from .io import DatasetHandle, ManifestEntry, append_manifest_entry, read_manifest
from .ionimage import extract_ion_image, preprocess, to_png_bytes


def task_image_id(dataset_id: str, mz: float, ppm: float) -> str:
    return f"{dataset_id}:{mz:.6f}@{ppm:g}"


@dataclass(frozen=True)
class AnnotationTask:
    image_id: str
    dataset_id: str
    mz: float
    ppm: float
    png: bytes


def build_tasks(handle: DatasetHandle, mzs, ppm: float) -> list[AnnotationTask]:
    """Render one task per candidate m/z, in the given (priority) order."""
    tasks = []
    for mz in mzs:
        img = preprocess(extract_ion_image(handle, float(mz), ppm), dataset_id=handle.dataset_id)
        tasks.append(
            AnnotationTask(
                image_id=task_image_id(handle.dataset_id, float(mz), ppm),
                dataset_id=handle.dataset_id,
                mz=float(mz),
                ppm=ppm,
                png=to_png_bytes(img),
            )
        )
    return tasks


class ManifestWriter:
    """Single-writer append access to one manifest file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.lock_path = self.path.with_suffix(self.path.suffix + ".lock")
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ManifestLocked(f"another writer holds {self.lock_path}")
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        self._lock = threading.Lock()

    def append(self, entry: ManifestEntry) -> None:
        with self._lock:
            append_manifest_entry(self.path, entry)

    def entries(self) -> list[ManifestEntry]:
        if not self.path.exists():
            return []
        return read_manifest(self.path)

    def latest_labels(self) -> dict[str, str]:
        """image_id -> latest class; later lines override earlier ones."""
        latest = {}
        for e in self.entries():
            latest[task_image_id(e.dataset_id, e.mz, e.ppm)] = e.label
        return latest

    def close(self) -> None:
        try:
            os.unlink(self.lock_path)
        except FileNotFoundError:
            pass


def create_app(
    tasks: list[AnnotationTask],
    manifest_path: str | Path,
    annotator: str = "anonymous",
    split: str = "Train",
    ui_dir: str | Path | None = None,
) -> FastAPI:
    from contextlib import asynccontextmanager

    writer = ManifestWriter(manifest_path)

    @asynccontextmanager
    async def lifespan(app):
        try:
            yield
        finally:
            writer.close()

    app = FastAPI(title="ion image annotation service", lifespan=lifespan)
    by_id = {t.image_id: t for t in tasks}
    app.state.manifest_writer = writer

    @app.get("/api/task/next")
    def next_task():
        labeled = writer.latest_labels()
        for t in tasks:
            if t.image_id not in labeled:
                return {
                    "image_id": t.image_id,
                    "dataset_id": t.dataset_id,
                    "mz": t.mz,
                    "ppm": t.ppm,
                    "png_base64": base64.b64encode(t.png).decode("ascii"),
                    "remaining": sum(1 for u in tasks if u.image_id not in labeled),
                }
        return JSONResponse(status_code=404, content={"detail": "no pending tasks"})

    @app.get("/api/classes")
    def classes():
        return {"classes": list(STRUCTURAL_CLASSES)}

    @app.post("/api/labels")
    def post_label(body: dict):
        image_id = body.get("image_id")
        cls = body.get("class")
        if not isinstance(image_id, str) or image_id not in by_id:
            return JSONResponse(status_code=404, content={"detail": f"unknown image_id {image_id!r}"})
        if not isinstance(cls, str) or not is_valid_class(cls):
            return JSONResponse(
                status_code=422,
                content={"detail": f"class must be one of {list(STRUCTURAL_CLASSES)}"},
            )
        task = by_id[image_id]
        current = writer.latest_labels().get(image_id)
        if current == cls:
            return {"image_id": image_id, "class": cls, "status": "unchanged"}
        writer.append(
            ManifestEntry(
                dataset_id=task.dataset_id,
                mz=task.mz,
                ppm=task.ppm,
                label=cls,
                annotator=annotator,
                split=split,
            )
        )
        status = "revised" if current is not None else "labeled"
        return {"image_id": image_id, "class": cls, "status": status}

    @app.get("/api/progress")
    def progress():
        latest = writer.latest_labels()
        counts = {c: 0 for c in STRUCTURAL_CLASSES}
        for cls in latest.values():
            counts[cls] += 1
        return {
            "per_class": counts,
            "labeled": len(latest),
            "total": len(tasks),
            "pending": sum(1 for t in tasks if t.image_id not in latest),
        }

    @app.get("/api/export")
    def export():
        if writer.path.exists():
            content = writer.path.read_text(encoding="utf-8")
        else:
            content = ""
        return PlainTextResponse(content, media_type="application/x-ndjson")

    @app.get("/")
    def index():
        if ui_dir is not None:
            index_path = Path(ui_dir) / "index.html"
            if index_path.exists():
                return FileResponse(index_path)
        return HTMLResponse(
            "<html><body><h1>ion image annotation service</h1>"
            "<p>No UI bundle configured; use the /api endpoints.</p></body></html>"
        )

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        ui_dir = Path(ui_dir)
        if ui_dir.exists():
            app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
