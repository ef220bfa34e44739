"""HTTP review service: the operator's adjust-and-approve loop.

A thin FastAPI app over one session file. Reads serve an immutable snapshot;
mutations (waypoint edits, approve, revert) are serialized through a single
writer guarded by optimistic revision tokens, re-validated against the arm
model, and persisted to the session file before the response returns.
"""
from __future__ import annotations

import math
import threading
from dataclasses import replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from . import kinematics
from .emit import BACKENDS, emit_program
from .errors import SkillPathError
from .geometry import ensure_rotation, fixed_xyz_to_matrix, matrix_to_fixed_xyz
from .kinematics import ArmModel
from .pipeline import compile_session
from .session import EditRecord, SessionState, load_session, now_iso, save_session


class WaypointOut(BaseModel):
    index: int
    s_mm: float
    xyz_mm: list[float]
    fixed_xyz_deg: list[float]
    rotation: list[list[float]]
    speed_mm_s: float
    reachable: bool
    violations: list[str]
    edited: bool


class ViolationOut(BaseModel):
    index: int
    kind: str
    detail: str


class PathResponse(BaseModel):
    revision: int
    approved: bool
    frame: str
    passed: bool
    program_name: str
    waypoints: list[WaypointOut]
    violations: list[ViolationOut]


class PatchWaypointRequest(BaseModel):
    revision: int
    fixed_xyz_deg: list[float] | None = Field(default=None, min_length=3, max_length=3)
    speed_mm_s: float | None = None
    author: str = "operator"


class RevisionRequest(BaseModel):
    revision: int


class SessionManager:
    """Single-writer guard around the session state and its file."""

    def __init__(self, session_path: Path, state: SessionState, model: ArmModel):
        self.session_path = Path(session_path)
        self._state = state
        self._model = model
        self._lock = threading.Lock()

    @classmethod
    def open(cls, session_path: str | Path) -> "SessionManager":
        state = load_session(session_path)
        cfg = state.project_config()
        model = kinematics.load_arm_model(cfg.arm_model_path.read_text(encoding="utf-8"))
        return cls(Path(session_path), state, model)

    def snapshot(self) -> SessionState:
        return self._state

    def mutate(self, expected_revision: int, fn) -> SessionState:
        with self._lock:
            state = self._state
            if state.revision != expected_revision:
                raise HTTPException(
                    status_code=409,
                    detail={
                        "reason": "stale-revision",
                        "expected": state.revision,
                        "got": expected_revision,
                    },
                )
            new_state = fn(state)
            save_session(new_state, self.session_path)
            self._state = new_state
            return new_state

    def revalidate(self, state: SessionState) -> SessionState:
        cfg = state.project_config()
        report = kinematics.validate(self._model, state.fused, cfg.validation)
        return replace(state, report=report)


def _path_response(state: SessionState) -> PathResponse:
    edited = state.edited_indices()
    waypoints = []
    for k in range(len(state.fused)):
        check = state.report.waypoints[k]
        f = matrix_to_fixed_xyz(state.fused.rotations[k])
        waypoints.append(
            WaypointOut(
                index=k,
                s_mm=float(state.fused.s_mm[k]),
                xyz_mm=[float(v) for v in state.fused.positions[k]],
                fixed_xyz_deg=[math.degrees(a) for a in f],
                rotation=[[float(v) for v in row] for row in state.fused.rotations[k]],
                speed_mm_s=float(state.fused.speeds[k]),
                reachable=check.reachable,
                violations=[v.kind for v in state.report.violations_at(k)],
                edited=k in edited,
            )
        )
    return PathResponse(
        revision=state.revision,
        approved=state.approved,
        frame=state.fused.frame,
        passed=state.report.passed,
        program_name=state.config["emit"]["name"],
        waypoints=waypoints,
        violations=[
            ViolationOut(index=v.index, kind=v.kind, detail=v.detail)
            for v in state.report.violations
        ],
    )


def create_app(manager: SessionManager, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="skillpath review service")

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"reason": "malformed-request", "errors": exc.errors()},
        )

    @app.get("/api/path", response_model=PathResponse)
    def get_path():
        return _path_response(manager.snapshot())

    @app.patch("/api/waypoints/{index}", response_model=PathResponse)
    def patch_waypoint(index: int, body: PatchWaypointRequest):
        state = manager.snapshot()
        if index < 0 or index >= len(state.fused):
            raise HTTPException(status_code=404, detail={"reason": "no-such-waypoint"})
        if body.fixed_xyz_deg is None and body.speed_mm_s is None:
            raise HTTPException(
                status_code=400,
                detail={"reason": "empty-edit", "hint": "set fixed_xyz_deg and/or speed_mm_s"},
            )

        def apply(state: SessionState) -> SessionState:
            fused = state.fused
            edits = list(state.edits)
            at = now_iso()
            if body.speed_mm_s is not None:
                cfg = state.project_config()
                v_min, v_max = cfg.fusion.speed_clamp_mm_s
                if not (v_min <= body.speed_mm_s <= v_max):
                    raise HTTPException(
                        status_code=400,
                        detail={
                            "reason": "speed-out-of-envelope",
                            "envelope_mm_s": [v_min, v_max],
                        },
                    )
                edits.append(
                    EditRecord(
                        index,
                        "speed_mm_s",
                        float(fused.speeds[index]),
                        float(body.speed_mm_s),
                        body.author,
                        at,
                    )
                )
                fused = fused.with_waypoint(index, speed=float(body.speed_mm_s))
            if body.fixed_xyz_deg is not None:
                if not all(math.isfinite(v) for v in body.fixed_xyz_deg):
                    raise HTTPException(
                        status_code=400, detail={"reason": "non-finite-orientation"}
                    )
                old = [
                    math.degrees(a) for a in matrix_to_fixed_xyz(fused.rotations[index])
                ]
                rotation = ensure_rotation(
                    fixed_xyz_to_matrix(np.deg2rad(body.fixed_xyz_deg))
                )
                edits.append(
                    EditRecord(
                        index,
                        "fixed_xyz_deg",
                        old,
                        [float(v) for v in body.fixed_xyz_deg],
                        body.author,
                        at,
                    )
                )
                fused = fused.with_waypoint(index, rotation=rotation)
            new_state = replace(
                state,
                fused=fused,
                edits=tuple(edits),
                approved=False,  # any edit voids a prior approval
                revision=state.revision + 1,
            )
            return manager.revalidate(new_state)

        return _path_response(manager.mutate(body.revision, apply))

    @app.post("/api/revert/{index}", response_model=PathResponse)
    def revert_waypoint(index: int, body: RevisionRequest):
        state = manager.snapshot()
        if index < 0 or index >= len(state.fused):
            raise HTTPException(status_code=404, detail={"reason": "no-such-waypoint"})

        def apply(state: SessionState) -> SessionState:
            fused = state.fused.with_waypoint(
                index,
                rotation=state.base.rotations[index],
                speed=float(state.base.speeds[index]),
            )
            record = EditRecord(
                index,
                "revert",
                None,
                None,
                "operator",
                now_iso(),
            )
            new_state = replace(
                state,
                fused=fused,
                edits=state.edits + (record,),
                approved=False,
                revision=state.revision + 1,
            )
            return manager.revalidate(new_state)

        return _path_response(manager.mutate(body.revision, apply))

    @app.post("/api/approve", response_model=PathResponse)
    def approve(body: RevisionRequest):
        state = manager.snapshot()
        if not state.report.passed:
            raise HTTPException(
                status_code=422,
                detail={
                    "reason": "validation-violations",
                    "violations": [v.to_dict() for v in state.report.violations],
                },
            )

        def apply(state: SessionState) -> SessionState:
            return replace(state, approved=True, revision=state.revision + 1)

        return _path_response(manager.mutate(body.revision, apply))

    @app.get("/api/program")
    def program_preview(backend: str = "portable"):
        if backend not in BACKENDS:
            raise HTTPException(
                status_code=400,
                detail={"reason": "unknown-backend", "options": list(BACKENDS)},
            )
        state = manager.snapshot()
        try:
            data = emit_program(compile_session(state), backend)
        except SkillPathError as exc:
            raise HTTPException(status_code=422, detail={"reason": str(exc)}) from exc
        media = "application/json" if backend == "portable" else "text/plain; charset=utf-8"
        return Response(content=data, media_type=media)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
