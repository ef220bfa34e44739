"""Session files: the fused path under review, its validation report, and the
operator's edit history.

Sessions are the handoff between the batch pipeline (``fuse`` writes one), the
review service (edits mutate it in place, crash-consistently), and the emitter
(``emit`` refuses unapproved sessions). Serialization is canonical JSON with
full-precision floats so identical pipelines produce identical bytes.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ProjectConfig
from .errors import ConfigError, ContractError
from .kinematics import ValidationReport
from .pathfusion import FusedPath

SESSION_VERSION = 1


@dataclass(frozen=True)
class EditRecord:
    index: int
    field: str  # "speed_mm_s" | "fixed_xyz_deg"
    old: object
    new: object
    author: str
    at: str  # ISO timestamp; interactive edits only, never the batch pipeline

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "field": self.field,
            "old": self.old,
            "new": self.new,
            "author": self.author,
            "at": self.at,
        }

    @staticmethod
    def from_dict(doc: dict) -> "EditRecord":
        return EditRecord(
            doc["index"], doc["field"], doc["old"], doc["new"], doc["author"], doc["at"]
        )


def now_iso() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


@dataclass(frozen=True)
class SessionState:
    fused: FusedPath
    base: FusedPath  # pre-edit path, the revert target
    report: ValidationReport
    edits: tuple[EditRecord, ...]
    approved: bool
    revision: int
    config: dict  # ProjectConfig snapshot

    def __post_init__(self):
        if len(self.fused) != len(self.base):
            raise ContractError("edited and base paths disagree on waypoint count")

    def edited_indices(self) -> set[int]:
        return {e.index for e in self.edits}

    def project_config(self) -> ProjectConfig:
        return ProjectConfig.from_snapshot(self.config)


def _fused_to_doc(path: FusedPath) -> list[dict]:
    out = []
    for k in range(len(path)):
        out.append(
            {
                "s_mm": float(path.s_mm[k]),
                "xyz_mm": [float(v) for v in path.positions[k]],
                "rotation": [[float(v) for v in row] for row in path.rotations[k]],
                "speed_mm_s": float(path.speeds[k]),
            }
        )
    return out


def _fused_from_doc(doc: list[dict], frame: str) -> FusedPath:
    positions = np.array([w["xyz_mm"] for w in doc], dtype=float)
    rotations = np.array([w["rotation"] for w in doc], dtype=float)
    speeds = np.array([w["speed_mm_s"] for w in doc], dtype=float)
    s = np.array([w["s_mm"] for w in doc], dtype=float)
    return FusedPath(positions, rotations, speeds, s, frame)


def session_to_json(state: SessionState) -> str:
    doc = {
        "version": SESSION_VERSION,
        "revision": state.revision,
        "approved": state.approved,
        "frame": state.fused.frame,
        "config": state.config,
        "waypoints": _fused_to_doc(state.fused),
        "base_waypoints": _fused_to_doc(state.base),
        "edits": [e.to_dict() for e in state.edits],
        "validation": state.report.to_dict(),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def session_from_json(text: str) -> SessionState:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid session JSON: {exc}") from exc
    if doc.get("version") != SESSION_VERSION:
        raise ConfigError(f"unsupported session version {doc.get('version')!r}")
    frame = doc["frame"]
    return SessionState(
        fused=_fused_from_doc(doc["waypoints"], frame),
        base=_fused_from_doc(doc["base_waypoints"], frame),
        report=ValidationReport.from_dict(doc["validation"]),
        edits=tuple(EditRecord.from_dict(e) for e in doc["edits"]),
        approved=doc["approved"],
        revision=doc["revision"],
        config=doc["config"],
    )


def save_session(state: SessionState, path: str | Path) -> None:
    """Atomic write: the file on disk is always a complete session."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(session_to_json(state), encoding="utf-8")
    os.replace(tmp, path)


def load_session(path: str | Path) -> SessionState:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"session file not found: {path}") from None
    return session_from_json(text)
