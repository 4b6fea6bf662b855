"""Local HTTP service exposing the deformation engine to the companion UI.

One deformation runs at a time; later requests queue FIFO and /status
reports the queue depth.  /cancel aborts the running solve between solver
iterations.  The service never mutates the loaded scene: every deformation
returns fresh arrays and exports are explicit client-side actions.
"""

import itertools
import struct
import threading

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from pydantic import BaseModel, Field

from .arap import SolveCancelled
from .errors import SolverError
from .handles import HandleSpec, snap_position
from .model import occupancy_ellipses
from .pipeline import SplatDeformer

PREVIEW_LIMIT = 200_000
PREVIEW_SEED = 0


class HandleBody(BaseModel):
    index: int | None = None
    position: list[float] | None = None
    displacement: list[float] | None = None
    auto_pca: dict | None = None


class DeformBody(BaseModel):
    handles: list[HandleBody] = Field(min_length=1)
    method: str | None = None
    fixed_radius: float | None = None
    cage_radius: float | None = None
    solver: dict | None = None
    adapt: bool | None = None
    binary: bool = False


class SnapBody(BaseModel):
    position: list[float]


class CancelBody(BaseModel):
    request_id: int | None = None


def _pack_means(means):
    """Length-prefixed little-endian float32 triplets."""
    data = np.ascontiguousarray(means, dtype="<f4")
    return struct.pack("<I", len(data)) + data.tobytes()


class EngineState:
    """Fitted deformer plus the single-flight queue bookkeeping."""

    def __init__(self, splats, config=None):
        kwargs = {}
        if config is not None:
            kwargs = dict(
                method=config.method, epsilon_factor=config.epsilon_factor,
                k_laplacian=config.k_laplacian, k_bind=config.k_bind,
                boundary_samples=config.boundary_samples,
                interior_rings=config.interior_rings,
                ring_samples=config.ring_samples,
                max_iters=config.max_iters, tol=config.tol, adapt=config.adapt)
        self.deformer = SplatDeformer(**kwargs).fit(splats)
        self.splats = splats
        self.gate = threading.Lock()
        self.status_lock = threading.Lock()
        self.waiting = 0
        self.running_id = None
        self.last_id = None
        self.cancel_event = threading.Event()
        self.ids = itertools.count(1)


def create_app(splats, config=None, frontend_dir=None):
    state = EngineState(splats, config)
    app = FastAPI(title="splatdeform service")
    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=frontend_dir, html=True),
                  name="ui")

    @app.get("/scene")
    def scene(limit: int = PREVIEW_LIMIT):
        n = len(state.splats)
        limit = min(limit, PREVIEW_LIMIT)
        if n > limit:
            rng = np.random.default_rng(PREVIEW_SEED)
            idx = np.sort(rng.choice(n, size=limit, replace=False))
        else:
            idx = np.arange(n)
        ell = occupancy_ellipses(state.splats)
        return {
            "count": n,
            "scale": state.deformer.scale_,
            "indices": idx.tolist(),
            "means": state.splats.means[idx].tolist(),
            "ellipses": {
                "axis1": ell.axes1[idx].tolist(),
                "axis2": ell.axes2[idx].tolist(),
                "semi_a": ell.semi_a[idx].tolist(),
                "semi_b": ell.semi_b[idx].tolist(),
                "normals": ell.normals[idx].tolist(),
                "valid": ell.valid[idx].tolist(),
            },
        }

    @app.get("/status")
    def status():
        with state.status_lock:
            return {"state": "running" if state.running_id is not None else "idle",
                    "queue_depth": state.waiting,
                    "running_id": state.running_id,
                    "last_request_id": state.last_id}

    @app.post("/handles")
    def snap(body: SnapBody):
        try:
            idx, dist = snap_position(state.splats.means, body.position,
                                      state.deformer.scale_)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"index": idx, "snap_distance": dist,
                "position": state.splats.means[idx].tolist()}

    @app.post("/deform")
    def deform(body: DeformBody):
        spec_obj = {"handles": [h.model_dump(exclude_none=True)
                                for h in body.handles]}
        if body.method:
            spec_obj["method"] = body.method
        if body.fixed_radius is not None:
            spec_obj["fixed_radius"] = body.fixed_radius
        if body.cage_radius is not None:
            spec_obj["cage_radius"] = body.cage_radius
        try:
            spec = HandleSpec.from_json(spec_obj)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

        rid = next(state.ids)
        with state.status_lock:
            state.waiting += 1
        with state.gate:
            with state.status_lock:
                state.waiting -= 1
                state.running_id = rid
            state.cancel_event.clear()
            deformer = state.deformer
            solver = body.solver or {}
            old = (deformer.max_iters, deformer.tol, deformer.adapt)
            if "max_iters" in solver:
                deformer.max_iters = int(solver["max_iters"])
            if "tol" in solver:
                deformer.tol = float(solver["tol"])
            if body.adapt is not None:
                deformer.adapt = bool(body.adapt)
            try:
                result_splats = deformer.transform(
                    spec, callback=lambda it, e: state.cancel_event.is_set())
                result = deformer.result_
            except SolveCancelled:
                raise HTTPException(status_code=409, detail="deformation cancelled")
            except (SolverError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            finally:
                deformer.max_iters, deformer.tol, deformer.adapt = old
                with state.status_lock:
                    state.running_id = None
                    state.last_id = rid

        if body.binary:
            return Response(content=_pack_means(result_splats.means),
                            media_type="application/octet-stream",
                            headers={"x-request-id": str(rid)})
        return {
            "request_id": rid,
            "method": result.method,
            "means": result_splats.means.tolist(),
            "rotations": result_splats.rotations.tolist(),
            "scales": result_splats.scales.tolist(),
            "solver": result.solver_report,
            "adaptation": result.adaptation_report,
        }

    @app.post("/cancel")
    def cancel(body: CancelBody = None):
        with state.status_lock:
            running = state.running_id
        if running is None:
            return {"cancelled": False, "reason": "idle"}
        if body and body.request_id is not None and body.request_id != running:
            return {"cancelled": False, "reason": "request not running"}
        state.cancel_event.set()
        return {"cancelled": True, "request_id": running}

    app.state.engine = state
    return app
