"""Named-frame registry and the cell calibration chain.

The default cell uses four frames: F (floor), S (tracker sensor/receptor),
R (robot base) and E (end-effector), linked by calibration transforms. The
graph is a tree; resolve(a, b) composes the edge transforms along the unique
path so that resolve(a, b).apply(p_b) expresses a point known in b in a.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import CalibrationError, FrameResolutionError
from .geometry import RigidTransform, ensure_rotation, fixed_xyz_to_matrix

DEFAULT_FRAMES = ("F", "S", "R", "E")


@dataclass(frozen=True)
class FrameGraph:
    """Immutable tree of frames; build via ``FrameGraph.from_edges``."""

    frames: tuple[str, ...]
    _adjacency: dict = field(repr=False)

    @staticmethod
    def from_edges(
        edges: Iterable[tuple[str, str, RigidTransform]],
        frames: Iterable[str] = DEFAULT_FRAMES,
    ) -> "FrameGraph":
        known = list(dict.fromkeys(frames))
        adjacency: dict[str, dict[str, RigidTransform]] = {f: {} for f in known}
        for src, dst, transform in edges:
            for name in (src, dst):
                if name not in adjacency:
                    raise CalibrationError(f"unknown frame name {name!r}")
            if src == dst:
                raise CalibrationError(f"self-edge on frame {src!r}")
            if dst in adjacency[src] or src in adjacency[dst]:
                raise CalibrationError(f"duplicate edge {src!r} -> {dst!r}")
            if _connected(adjacency, src, dst):
                raise CalibrationError(
                    f"edge {src!r} -> {dst!r} would close a cycle; the frame set must be a tree"
                )
            adjacency[src][dst] = transform
            adjacency[dst][src] = transform.inverse()
        return FrameGraph(tuple(known), adjacency)

    def resolve(self, src: str, dst: str) -> RigidTransform:
        """Transform expressing dst-frame coordinates in the src frame."""
        for name in (src, dst):
            if name not in self._adjacency:
                raise FrameResolutionError(f"unknown frame name {name!r}")
        if src == dst:
            return RigidTransform.identity()
        path = _find_path(self._adjacency, src, dst)
        if path is None:
            raise FrameResolutionError(f"frames {src!r} and {dst!r} are not connected")
        out = RigidTransform.identity()
        for a, b in zip(path, path[1:]):
            out = out.compose(self._adjacency[a][b])
        return out

    def map_pose(self, pose: RigidTransform, src: str, dst: str) -> RigidTransform:
        """Re-express a pose known in ``src`` coordinates in ``dst`` coordinates."""
        return self.resolve(dst, src).compose(pose)


def _connected(adjacency, a: str, b: str) -> bool:
    return _find_path(adjacency, a, b) is not None


def _find_path(adjacency, a: str, b: str) -> list[str] | None:
    # BFS; the graph is a tree so the path found is the unique simple path.
    seen = {a}
    queue = [[a]]
    while queue:
        path = queue.pop(0)
        node = path[-1]
        if node == b:
            return path
        for nxt in adjacency[node]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(path + [nxt])
    return None


_EDGE_KEYS = {"from", "to", "xyz_mm", "fixed_xyz_deg"}
_DOC_KEYS = {"version", "frames", "edges"}


def load_calibration(source: str | IO[str] | dict) -> FrameGraph:
    """Load a calibration document (JSON) into a frame graph.

    Schema: {"version": 1, "frames": [...], "edges": [{"from", "to",
    "xyz_mm": [x, y, z], "fixed_xyz_deg": [phi, theta, psi]}, ...]}.
    Unknown keys are rejected; rotations are repaired or rejected per the
    geometry import policy.
    """
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise CalibrationError(f"invalid JSON: {exc}") from exc
    else:
        try:
            doc = json.load(source)
        except json.JSONDecodeError as exc:
            raise CalibrationError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CalibrationError("calibration document must be a JSON object")
    extra = set(doc) - _DOC_KEYS
    if extra:
        raise CalibrationError(f"unknown keys in calibration document: {sorted(extra)}")
    if doc.get("version") != 1:
        raise CalibrationError(f"unsupported calibration version {doc.get('version')!r}")
    frames = doc.get("frames", list(DEFAULT_FRAMES))
    if not isinstance(frames, list) or not all(isinstance(f, str) for f in frames):
        raise CalibrationError("'frames' must be a list of strings")
    if len(set(frames)) != len(frames):
        raise CalibrationError("frame names must be unique")
    edges = []
    for i, entry in enumerate(doc.get("edges", [])):
        if not isinstance(entry, dict):
            raise CalibrationError(f"edge {i}: must be an object")
        extra = set(entry) - _EDGE_KEYS
        if extra:
            raise CalibrationError(f"edge {i}: unknown keys {sorted(extra)}")
        missing = _EDGE_KEYS - set(entry)
        if missing:
            raise CalibrationError(f"edge {i}: missing keys {sorted(missing)}")
        xyz = entry["xyz_mm"]
        angles = entry["fixed_xyz_deg"]
        for name, val in (("xyz_mm", xyz), ("fixed_xyz_deg", angles)):
            if not (isinstance(val, list) and len(val) == 3):
                raise CalibrationError(f"edge {i}: {name} must be a 3-element list")
        try:
            rotation = ensure_rotation(fixed_xyz_to_matrix(np.deg2rad(angles)))
            transform = RigidTransform(rotation, np.asarray(xyz, dtype=float))
        except Exception as exc:
            raise CalibrationError(f"edge {i}: {exc}") from exc
        edges.append((entry["from"], entry["to"], transform))
    return FrameGraph.from_edges(edges, frames)


def resolve(g: FrameGraph, src: str, dst: str) -> RigidTransform:
    return g.resolve(src, dst)


def map_pose(g: FrameGraph, pose: RigidTransform, src: str, dst: str) -> RigidTransform:
    return g.map_pose(pose, src, dst)
