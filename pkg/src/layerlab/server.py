"""HTTP service for the browser studio.

Decomposition jobs run one at a time (FIFO) on a worker thread and are
polled via /jobs/{id}; finished LayerSets live in an LRU cache (at most 8)
that recolor requests read concurrently.  All endpoints are CORS-enabled.
"""

from __future__ import annotations

import queue
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response

from . import layerops, pipeline, solver
from .palette import Palette, PaletteError
from .pixelcore import PixelVolume, VolumeError, decode_image_bytes, encode_png

MAX_CACHED_LAYER_SETS = 8


@dataclass
class Job:
    id: str
    state: str = "queued"  # queued | running | done | error
    error: str | None = None
    layer_id: str | None = None
    report: dict | None = None

    def to_dict(self) -> dict:
        return {"job_id": self.id, "state": self.state, "error": self.error,
                "layer_id": self.layer_id, "report": self.report}


@dataclass
class LayerEntry:
    layers: layerops.LayerSet
    volume: PixelVolume
    config: pipeline.PipelineConfig
    palette: Palette
    strokes: list | None = None


@dataclass
class _Task:
    job: Job
    volume: PixelVolume
    config: pipeline.PipelineConfig
    palette: Palette | None
    strokes: list | None = None


class StudioState:
    """Job queue plus the LRU cache of decomposed layer sets."""

    def __init__(self, max_cache: int = MAX_CACHED_LAYER_SETS):
        self.jobs: dict[str, Job] = {}
        self.cache: "OrderedDict[str, LayerEntry]" = OrderedDict()
        self.tasks: "queue.Queue[_Task]" = queue.Queue()
        self.lock = threading.RLock()
        self.max_cache = max_cache
        self.worker = threading.Thread(target=self._work, daemon=True,
                                       name="layerlab-decompose")
        self.worker.start()

    def submit(self, volume: PixelVolume, config: pipeline.PipelineConfig,
               palette: Palette | None, strokes: list | None = None) -> Job:
        job = Job(id=uuid.uuid4().hex[:12])
        with self.lock:
            self.jobs[job.id] = job
        self.tasks.put(_Task(job=job, volume=volume, config=config,
                             palette=palette, strokes=strokes))
        return job

    def _work(self):
        while True:
            task = self.tasks.get()
            job = task.job
            with self.lock:
                job.state = "running"
            try:
                out = pipeline.decompose(task.volume, task.config,
                                         palette=task.palette,
                                         constraint_strokes=task.strokes)
            except Exception as exc:  # surfaced through job polling
                with self.lock:
                    job.state = "error"
                    job.error = str(exc)
                continue
            layer_id = uuid.uuid4().hex[:12]
            entry = LayerEntry(layers=out.layers, volume=task.volume,
                               config=task.config, palette=out.layers.palette,
                               strokes=task.strokes)
            with self.lock:
                self.cache[layer_id] = entry
                while len(self.cache) > self.max_cache:
                    self.cache.popitem(last=False)
                job.layer_id = layer_id
                job.report = out.report
                job.state = "done"

    def get_entry(self, layer_id: str) -> LayerEntry:
        with self.lock:
            if layer_id not in self.cache:
                raise KeyError(layer_id)
            self.cache.move_to_end(layer_id)
            return self.cache[layer_id]


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def _frame_or_404(layers: layerops.LayerSet, frame: int) -> None:
    if not 0 <= frame < layers.frames:
        raise HTTPException(status_code=404, detail=f"frame {frame} out of range")


def create_app(max_cache: int = MAX_CACHED_LAYER_SETS) -> FastAPI:
    app = FastAPI(title="layerlab")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    state = StudioState(max_cache=max_cache)
    app.state.studio = state

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/decompose", status_code=202)
    async def decompose(images: list[UploadFile] = File(...),
                        num_layers: int = Form(pipeline.DEFAULT_LAYERS),
                        superpixels: int | None = Form(None),
                        seed: int = Form(0),
                        lambda_m: float = Form(1.0),
                        lambda_r: float = Form(0.5),
                        lambda_u: float = Form(0.1),
                        lambda_e: float = Form(0.1),
                        lambda_n: float = Form(1.0),
                        suppression_iters: int = Form(4),
                        tau: float = Form(solver.DEFAULT_TAU),
                        auto_constraints: str = Form("true"),
                        palette: str | None = Form(None)):
        if num_layers < 1:
            raise HTTPException(status_code=400, detail="num_layers must be >= 1")
        named = sorted([(f.filename or "", await f.read()) for f in images],
                       key=lambda item: item[0])
        try:
            frames = [decode_image_bytes(data) for _, data in named]
        except VolumeError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if not frames:
            raise HTTPException(status_code=400, detail="no images uploaded")
        if any(f.shape != frames[0].shape for f in frames):
            raise HTTPException(status_code=400, detail="frames of mismatched dimensions")
        volume = PixelVolume.from_array(np.stack(frames))

        pal = None
        if palette:
            try:
                import json as _json
                pal = Palette(colors=np.asarray(_json.loads(palette)["colors"],
                                                dtype=np.float64))
            except (ValueError, KeyError, PaletteError) as exc:
                raise HTTPException(status_code=400, detail=f"bad palette: {exc}")

        params = solver.SolverParams(lambda_m=lambda_m, lambda_r=lambda_r,
                                     lambda_u=lambda_u, lambda_e=lambda_e,
                                     lambda_n=lambda_n,
                                     suppression_iters=suppression_iters)
        config = pipeline.PipelineConfig(
            num_layers=len(pal) if pal is not None else num_layers,
            superpixels=superpixels, seed=seed, tau=tau,
            auto_constraints=_parse_bool(auto_constraints), params=params)
        job = state.submit(volume, config, pal)
        return {"job_id": job.id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        with state.lock:
            job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        return job.to_dict()

    @app.get("/layers/{layer_id}/meta")
    def layer_meta(layer_id: str):
        try:
            entry = state.get_entry(layer_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown layer id")
        layers = entry.layers
        return {"layer_id": layer_id, "width": layers.width, "height": layers.height,
                "frames": layers.frames, "num_layers": layers.num_layers,
                "palette": layers.palette.colors.tolist()}

    @app.get("/layers/{layer_id}/plane/{j}.png")
    def layer_plane(layer_id: str, j: int, frame: int = 0, tint: int = 0):
        try:
            entry = state.get_entry(layer_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown layer id")
        layers = entry.layers
        if not 0 <= j < layers.num_layers:
            raise HTTPException(status_code=404, detail=f"layer {j} out of range")
        _frame_or_404(layers, frame)
        plane = layers.plane(j)[frame]
        gray = np.clip(plane, 0.0, 1.0)
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
        if tint:
            rgb[plane > 1.0] = (0.0, 1.0, 0.0)
            rgb[plane < 0.0] = (1.0, 0.0, 0.0)
        return Response(content=encode_png(rgb), media_type="image/png")

    @app.get("/layers/{layer_id}/reconstruction.png")
    def reconstruction(layer_id: str, frame: int = 0):
        try:
            entry = state.get_entry(layer_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown layer id")
        _frame_or_404(entry.layers, frame)
        img = layerops.compose_frame(entry.layers, entry.layers.palette, frame)
        return Response(content=encode_png(img), media_type="image/png")

    @app.post("/layers/{layer_id}/recolor")
    def recolor(layer_id: str, body: dict, frame: int = 0):
        try:
            entry = state.get_entry(layer_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown layer id")
        _frame_or_404(entry.layers, frame)
        colors = body.get("colors")
        if not isinstance(colors, list):
            raise HTTPException(status_code=400, detail='body must be {"colors": [[r,g,b], ...]}')
        try:
            new_palette = Palette(colors=np.asarray(colors, dtype=np.float64))
        except (ValueError, PaletteError) as exc:
            raise HTTPException(status_code=400, detail=f"bad palette: {exc}")
        if len(new_palette) != entry.layers.num_layers:
            raise HTTPException(status_code=400,
                                detail=f"palette has {len(new_palette)} colors, "
                                       f"expected {entry.layers.num_layers}")
        t0 = time.perf_counter()
        img = layerops.compose_frame(entry.layers, new_palette, frame)
        compose_ms = (time.perf_counter() - t0) * 1000.0
        return Response(content=encode_png(img),
                        media_type="image/png",
                        headers={"X-Compose-Ms": f"{compose_ms:.3f}"})

    @app.post("/layers/{layer_id}/constraints", status_code=202)
    def add_constraints(layer_id: str, body: dict):
        try:
            entry = state.get_entry(layer_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown layer id")
        strokes = body.get("strokes")
        if not isinstance(strokes, list):
            raise HTTPException(status_code=400, detail='body must be {"strokes": [...]}')
        layers = entry.layers
        for i, stroke in enumerate(strokes):
            try:
                x, y = int(stroke["x"]), int(stroke["y"])
                t = int(stroke.get("t", 0))
                layer = int(stroke["layer"])
                value = float(stroke["value"])
            except (KeyError, TypeError, ValueError):
                raise HTTPException(status_code=400, detail=f"malformed stroke #{i}")
            if not (0 <= x < layers.width and 0 <= y < layers.height
                    and 0 <= t < layers.frames):
                raise HTTPException(status_code=400, detail=f"stroke #{i} out of bounds")
            if not 0 <= layer < layers.num_layers:
                raise HTTPException(status_code=400, detail=f"stroke #{i} layer out of range")
            if not 0.0 <= value <= 1.0:
                raise HTTPException(status_code=400, detail=f"stroke #{i} value outside [0,1]")
        merged = list(entry.strokes or []) + strokes
        job = state.submit(entry.volume, entry.config, entry.palette, strokes=merged)
        return {"job_id": job.id}

    return app
