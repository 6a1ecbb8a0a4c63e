"""Session-based refinement HTTP API over a trained policy.

Each session owns an inference-mode environment (server-held probability map,
hints, and schedule position); mutating requests on a session are serialized
by a per-session lock. Sessions are in-memory only and expire after 30
minutes idle.
"""

from __future__ import annotations

import base64
import threading
import time
import uuid
from dataclasses import replace

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response

from . import metrics, nn
from .env import EpisodeConfig, init_episode
from .interaction import Click
from .volume import (
    VolumeFormatError,
    mask_from_bytes,
    mask_to_bytes,
    Mask,
    normalize,
    volume_from_bytes,
)

MAX_PAYLOAD = 64 * 1024 * 1024  # 64 MiB upload cap
SESSION_TTL = 30 * 60.0
SWEEP_INTERVAL = 60.0

_LAYERS = ("intensity", "probability", "prediction", "h_plus", "h_minus", "supervoxel_labels")


class _Session:
    def __init__(self, env, gt: Mask | None):
        self.id = uuid.uuid4().hex
        self.env = env
        self.gt = gt
        self.created = time.time()
        self.touched = self.created
        self.lock = threading.Lock()

    def touch(self):
        self.touched = time.time()


def create_app(checkpoint, episode_cfg: EpisodeConfig | None = None) -> FastAPI:
    """Build the app around a checkpoint path or an in-memory parameter set."""
    if isinstance(checkpoint, nn.NetworkParams):
        params = checkpoint
    else:
        params, _ = nn.load_checkpoint(checkpoint)
    cfg = episode_cfg if episode_cfg is not None else EpisodeConfig()

    app = FastAPI(title="interactive refinement service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()
    app.state.sessions = sessions

    def sweep():
        now = time.time()
        with registry_lock:
            stale = [sid for sid, s in sessions.items() if now - s.touched > SESSION_TTL]
            for sid in stale:
                del sessions[sid]

    sweeper = threading.Thread(target=_sweep_loop, args=(sweep,), daemon=True)
    sweeper.start()

    def get_session(sid: str) -> _Session:
        sweep()
        with registry_lock:
            session = sessions.get(sid)
        if session is None:
            raise HTTPException(404, "unknown session")
        session.touch()
        return session

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.json()
        blob = body.get("volume_b64")
        if not blob:
            raise HTTPException(400, "volume_b64 required")
        try:
            raw = base64.b64decode(blob)
        except Exception:
            raise HTTPException(400, "invalid base64 payload")
        if len(raw) > MAX_PAYLOAD:
            raise HTTPException(413, "payload too large")
        try:
            v = normalize(volume_from_bytes(raw))
        except VolumeFormatError as exc:
            raise HTTPException(400, f"malformed volume: {exc}")
        gt = None
        if body.get("gt_b64"):
            try:
                gt = mask_from_bytes(base64.b64decode(body["gt_b64"]))
            except (VolumeFormatError, ValueError) as exc:
                raise HTTPException(400, f"malformed ground truth: {exc}")
            if gt.dims != v.dims:
                raise HTTPException(400, "ground truth dims mismatch")
        seed = int(body.get("options", {}).get("seed", 0))
        env = init_episode(v, gt, cfg, rng=np.random.default_rng(seed))
        env.labeling()  # warm the iteration-0 supervoxels
        session = _Session(env, gt)
        with registry_lock:
            sessions[session.id] = session
        return {
            "id": session.id,
            "dims": list(v.dims),
            "spacing": list(v.spacing),
            "iteration": 0,
            "T": cfg.T,
            "has_gt": gt is not None,
        }

    @app.get("/sessions/{sid}")
    def session_info(sid: str):
        session = get_session(sid)
        env = session.env
        info = {
            "id": session.id,
            "dims": list(env.volume.dims),
            "spacing": list(env.volume.spacing),
            "iteration": env.iteration,
            "T": env.cfg.T,
            "has_gt": session.gt is not None,
            "object_hints": len(env.hints.object_hints),
            "background_hints": len(env.hints.background_hints),
        }
        if session.gt is not None:
            info["dsc"] = metrics.dsc(env.prediction, session.gt.labels)
        return info

    @app.get("/sessions/{sid}/slice")
    def get_slice(sid: str, axis: str = "z", index: int = 0, layer: str = "probability"):
        session = get_session(sid)
        env = session.env
        if layer not in _LAYERS:
            raise HTTPException(422, f"unknown layer {layer!r}")
        axes = {"z": 0, "y": 1, "x": 2}
        if axis not in axes:
            raise HTTPException(422, f"unknown axis {axis!r}")
        ax = axes[axis]
        if not (0 <= index < env.volume.dims[ax]):
            raise HTTPException(416, "slice index out of range")
        if layer == "intensity":
            grid = env.volume.data
        elif layer == "probability":
            grid = env.prob
        elif layer == "prediction":
            grid = env.prediction
        elif layer == "h_plus":
            grid = env.maps[0]
        elif layer == "h_minus":
            grid = env.maps[1]
        else:
            grid = env.labeling().labels
        plane = np.take(grid, index, axis=ax)
        return {
            "axis": axis,
            "index": index,
            "layer": layer,
            "shape": list(plane.shape),
            "values": plane.ravel().tolist(),
        }

    @app.post("/sessions/{sid}/clicks")
    def post_clicks(sid: str, body: dict):
        session = get_session(sid)
        env = session.env
        clicks = []
        dims = env.volume.dims
        for item in body.get("clicks", []):
            try:
                click = Click.from_wire(item)
            except (KeyError, ValueError, TypeError) as exc:
                raise HTTPException(422, f"bad click: {exc}")
            z, y, x = click.pos
            if not (0 <= z < dims[0] and 0 <= y < dims[1] and 0 <= x < dims[2]):
                raise HTTPException(422, f"click position {click.pos} outside grid")
            clicks.append(click)
        with session.lock:
            obj_added, bg_added = env.post_clicks(clicks)
            return {
                "object_added": obj_added,
                "background_added": bg_added,
                "object_hints": len(env.hints.object_hints),
                "background_hints": len(env.hints.background_hints),
            }

    @app.post("/sessions/{sid}/refine")
    def refine(sid: str, body: dict | None = None):
        session = get_session(sid)
        env = session.env
        allow_extra = bool((body or {}).get("allow_extra", False))
        with session.lock:
            if env.done and not allow_extra:
                raise HTTPException(409, "refinement sequence complete")
            prev = env.prob.copy()
            state = env.begin_iteration(allow_extra=allow_extra)
            policy, _, _ = nn.forward(params, state)
            env.step(policy.argmax(axis=0))
            changed = int((env.prob != prev).sum())
            result = {
                "iteration": env.iteration,
                "changed_voxels": changed,
                "done": env.done,
            }
            if session.gt is not None:
                result["dsc"] = metrics.dsc(env.prediction, session.gt.labels)
            return result

    @app.get("/sessions/{sid}/mask")
    def export_mask(sid: str):
        session = get_session(sid)
        env = session.env
        mask = Mask(env.volume.spacing, env.prediction)
        return Response(content=mask_to_bytes(mask), media_type="application/octet-stream")

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        get_session(sid)
        with registry_lock:
            sessions.pop(sid, None)
        return {"deleted": sid}

    return app


def _sweep_loop(sweep):
    while True:
        time.sleep(SWEEP_INTERVAL)
        sweep()
