"""Fusing CAD contour positions with demonstrated orientations and speeds.

The nominal path carries positions only (they come from CAD and are treated
as exact), the demonstration carries orientations and timing. The two are
aligned on a common axis - arc length along the contour - by a monotone
dynamic program, after which every resampled contour point picks up an
interpolated, window-smoothed orientation and a speed estimate.

Waypoint positions are always verbatim copies or polyline evaluations of the
nominal path; no arithmetic that could perturb them happens after parsing.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import IO, Sequence, TYPE_CHECKING

import numpy as np

from .errors import ContractError, DegenerateInputError, PathParseError
from .geometry import RigidTransform, quat_from_matrix, quat_to_matrix, slerp

if TYPE_CHECKING:  # pragma: no cover
    from .capture import DemonstrationTrace
    from .frames import FrameGraph

DUPLICATE_TOL_MM = 1e-6
DEFAULT_WEIGHTS = (1.0, 1.0, 0.1)
# Vertices turning less than this are treated as smooth and are not snapped
# during resampling (dropping them costs no geometry).
CORNER_ANGLE_RAD = 1e-3


@dataclass(frozen=True)
class NominalPath:
    """Ordered CAD/CAM positions in mm, optionally closed."""

    points: np.ndarray  # (N, 3) mm
    closed: bool
    frame: str = "F"
    units_declared: str = "mm"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise PathParseError(f"points must be (N, 3), got {pts.shape}")
        if len(pts) < 2:
            raise PathParseError("a path needs at least 2 distinct points")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if float(arc_length_table(self)[-1]) <= 0.0:
            raise PathParseError("path has zero total length")

    @property
    def total_length(self) -> float:
        return float(arc_length_table(self)[-1])


def arc_length_table(path: NominalPath) -> np.ndarray:
    """Cumulative arc length aligned with vertices; closed paths append the
    closing segment, so the last entry is always the total length."""
    pts = path.points
    if path.closed:
        pts = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def evaluate_at(path: NominalPath, s) -> np.ndarray:
    """Evaluate the polyline at arc length(s), clamped to [0, total].

    Exact vertex arc lengths return the vertex coordinates unchanged.
    """
    table = arc_length_table(path)
    pts = path.points
    if path.closed:
        pts = np.vstack([path.points, path.points[:1]])
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    s_arr = np.clip(s_arr, 0.0, table[-1])
    idx = np.searchsorted(table, s_arr, side="right") - 1
    idx = np.clip(idx, 0, len(table) - 2)
    a = pts[idx]
    b = pts[idx + 1]
    seg = table[idx + 1] - table[idx]
    u = (s_arr - table[idx]) / seg
    out = a + u[:, None] * (b - a)
    if np.isscalar(s) or np.asarray(s).ndim == 0:
        return out[0]
    return out


def parse_nominal_path(source: str | IO[str] | dict) -> NominalPath:
    """Parse the nominal-path JSON document.

    Schema: {"version": 1, "units": "mm"|"m", "closed": bool, "frame": "F",
    "points": [[x, y, z], ...]}. Unknown keys rejected; consecutive
    duplicates merged; meters converted to millimeters on load.
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = source if isinstance(source, str) else source.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PathParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise PathParseError("path document must be a JSON object")
    allowed = {"version", "units", "closed", "frame", "points"}
    extra = set(doc) - allowed
    if extra:
        raise PathParseError(f"unknown keys: {sorted(extra)}")
    if doc.get("version") != 1:
        raise PathParseError(f"unsupported version {doc.get('version')!r}")
    units = doc.get("units", "mm")
    if units not in ("mm", "m"):
        raise PathParseError(f"unknown unit {units!r}")
    closed = doc.get("closed", False)
    if not isinstance(closed, bool):
        raise PathParseError("'closed' must be a boolean")
    frame = doc.get("frame", "F")
    raw = doc.get("points")
    if not isinstance(raw, list) or any(
        not (isinstance(p, list) and len(p) == 3) for p in raw
    ):
        raise PathParseError("'points' must be a list of [x, y, z] triples")
    pts = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise PathParseError("points contain non-finite values")
    if units == "m":
        pts = pts * 1000.0
    # Merge consecutive duplicates; for closed paths also an explicit closing
    # point repeating the first.
    keep = [0]
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) >= DUPLICATE_TOL_MM:
            keep.append(i)
    pts = pts[keep]
    if closed and len(pts) > 2 and np.linalg.norm(pts[-1] - pts[0]) < DUPLICATE_TOL_MM:
        pts = pts[:-1]
    if len(pts) < 2:
        raise PathParseError("fewer than 2 distinct points")
    return NominalPath(pts, closed, frame, units)


def nominal_path_to_json(path: NominalPath) -> str:
    doc = {
        "version": 1,
        "units": "mm",
        "closed": path.closed,
        "frame": path.frame,
        "points": [[float(c) for c in p] for p in path.points],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _corner_flags(path: NominalPath, threshold_rad: float) -> np.ndarray:
    """True where the polyline genuinely turns at a vertex."""
    pts = path.points
    n = len(pts)
    flags = np.zeros(n, dtype=bool)
    for j in range(n):
        if not path.closed and (j == 0 or j == n - 1):
            continue
        v1 = pts[j] - pts[(j - 1) % n]
        v2 = pts[(j + 1) % n] - pts[j]
        n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
        if n1 < DUPLICATE_TOL_MM or n2 < DUPLICATE_TOL_MM:
            continue
        cosang = float(np.dot(v1, v2) / (n1 * n2))
        ang = math.acos(min(1.0, max(-1.0, cosang)))
        flags[j] = ang > threshold_rad
    return flags


def resample(
    path: NominalPath, spacing_mm: float, corner_angle_rad: float = CORNER_ANGLE_RAD
) -> NominalPath:
    """Resample at uniform arc length, snapping samples onto true corners.

    The step is adjusted so the total length divides evenly. A corner vertex
    replaces its nearest sample (always within half a step), preserving sharp
    geometry bit-exactly; smooth vertices are left to the uniform grid.
    """
    if spacing_mm <= 0:
        raise DegenerateInputError("spacing must be positive")
    table = arc_length_table(path)
    total = float(table[-1])
    if spacing_mm >= total:
        raise DegenerateInputError(
            f"spacing {spacing_mm} mm must be smaller than the path length {total} mm"
        )
    n = max(1, int(round(total / spacing_mm)))
    h = total / n
    count = n if path.closed else n + 1
    s_grid = np.arange(count) * h
    if not path.closed:
        s_grid[-1] = total
    points = evaluate_at(path, s_grid)

    # Snap corner vertices onto their nearest sample.
    corners = _corner_flags(path, corner_angle_rad)
    snapped: dict[int, tuple[float, int]] = {}
    vertex_count = len(path.points)
    for j in range(vertex_count):
        if not corners[j]:
            continue
        s_v = float(table[j])
        k = int(round(s_v / h))
        if path.closed:
            k %= n
        else:
            k = min(k, n)
        dist = abs(s_v - k * h)
        if k in snapped and snapped[k][0] <= dist:
            continue
        snapped[k] = (dist, j)
    s_new = s_grid.copy()
    pts_new = points.copy()
    for k, (_, j) in snapped.items():
        s_new[k] = table[j]
        pts_new[k] = path.points[j]
    # A snap that breaks strict monotonicity (corners closer together than the
    # spacing) is dropped in favor of the uniform sample.
    order_ok = np.all(np.diff(s_new) > 0)
    if not order_ok:
        s_new = s_grid.copy()
        pts_new = points.copy()
        for k, (_, j) in sorted(snapped.items()):
            trial = s_new.copy()
            trial[k] = table[j]
            if np.all(np.diff(trial) > 0):
                s_new = trial
                pts_new[k] = path.points[j]
    return NominalPath(pts_new, path.closed, path.frame, path.units_declared)


def weights_from_trust(trace: "DemonstrationTrace") -> np.ndarray:
    from .capture import TRUST_WEIGHTS

    trust = trace.samples[0].trust
    return np.array([TRUST_WEIGHTS[axis] for axis in trust], dtype=float)


def anchor_closed_path(
    path: NominalPath, position: Sequence[float], weights: Sequence[float] | None = None
) -> NominalPath:
    """Rotate a closed path so arc length 0 sits nearest the given position.

    Closed contours have no canonical origin; the demonstration's first active
    sample defines one. Open paths are returned unchanged.
    """
    if not path.closed:
        return path
    w = np.asarray(weights if weights is not None else DEFAULT_WEIGHTS, dtype=float)
    p = np.asarray(position, dtype=float)
    table = arc_length_table(path)
    pts = np.vstack([path.points, path.points[:1]])
    best = (math.inf, 0.0)
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        d = b - a
        denom = float(np.sum(w * d * d))
        u = 0.0 if denom <= 0 else float(np.sum(w * (p - a) * d) / denom)
        u = min(1.0, max(0.0, u))
        q = a + u * d
        cost = float(np.sum(w * (p - q) ** 2))
        if cost < best[0]:
            best = (cost, float(table[i] + u * (table[i + 1] - table[i])))
    s_star = best[1]
    total = float(table[-1])
    if s_star <= 1e-9 or s_star >= total - 1e-9:
        return path
    seg = int(np.searchsorted(table, s_star, side="right") - 1)
    seg = min(seg, len(path.points) - 1)
    start = evaluate_at(path, s_star)
    rotated = [start]
    order = list(range(seg + 1, len(path.points))) + list(range(0, seg + 1))
    for j in order:
        rotated.append(path.points[j])
    pts_new = np.array(rotated)
    # The inserted start may coincide with the following vertex.
    if np.linalg.norm(pts_new[0] - pts_new[1]) < DUPLICATE_TOL_MM:
        pts_new = pts_new[1:]
    if np.linalg.norm(pts_new[0] - pts_new[-1]) < DUPLICATE_TOL_MM:
        pts_new = pts_new[:-1]
    return NominalPath(pts_new, True, path.frame, path.units_declared)


@dataclass(frozen=True)
class Correspondence:
    """Per-sample nondecreasing arc lengths on the nominal path."""

    s_mm: np.ndarray
    grid_mm: np.ndarray
    grid_indices: np.ndarray  # raw monotone DP assignment

    def __post_init__(self):
        for name in ("s_mm", "grid_mm", "grid_indices"):
            arr = np.asarray(getattr(self, name))
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.s_mm) < 0):
            raise ContractError("correspondence must be nondecreasing")

    def __len__(self) -> int:
        return len(self.s_mm)


def monotone_assign(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost nondecreasing assignment of rows to columns.

    cost[i, k] is the price of putting sample i at grid cell k; the result is
    the lexicographically smallest index vector among all minimizers, computed
    by a backward DP plus a greedy forward pass.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.size == 0:
        raise DegenerateInputError("cost matrix must be non-empty and 2-D")
    m, k = cost.shape
    best = np.empty((m, k))
    suffix = np.empty((m, k))
    best[m - 1] = cost[m - 1]
    suffix[m - 1] = np.minimum.accumulate(best[m - 1][::-1])[::-1]
    for i in range(m - 2, -1, -1):
        best[i] = cost[i] + suffix[i + 1]
        suffix[i] = np.minimum.accumulate(best[i][::-1])[::-1]
    indices = np.empty(m, dtype=int)
    lo = 0
    for i in range(m):
        target = suffix[i, lo]
        lo = lo + int(np.argmax(best[i, lo:] == target))
        indices[i] = lo
    return indices


def _weighted_cost_matrix(
    samples: np.ndarray, grid_points: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    cost = np.zeros((len(samples), len(grid_points)))
    for axis in range(3):
        d = samples[:, axis, None] - grid_points[None, :, axis]
        cost += weights[axis] * d * d
    return cost


def correspond(
    path: NominalPath,
    trace: "DemonstrationTrace",
    weights: Sequence[float] | None = None,
    *,
    grid_step_mm: float | None = None,
    refine: bool = True,
) -> Correspondence:
    """Monotone arc-length assignment of demonstration samples to the path.

    The DP minimizes the per-axis weighted squared distance subject to the
    assignment being nondecreasing (a single forward pass). When ``refine`` is
    set, each sample's arc length is then polished by continuous projection
    onto the neighboring segments, which removes the grid quantization from
    downstream speed estimates.
    """
    if len(trace) == 0:
        raise DegenerateInputError("empty trace")
    if weights is None:
        w = weights_from_trust(trace)
    else:
        w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise DegenerateInputError("weights must be non-negative and not all zero")

    table = arc_length_table(path)
    total = float(table[-1])
    if grid_step_mm is None:
        grid = table.copy()
    else:
        if grid_step_mm <= 0:
            raise DegenerateInputError("grid step must be positive")
        cells = max(1, int(round(total / grid_step_mm)))
        grid = np.linspace(0.0, total, cells + 1)
    grid_points = evaluate_at(path, grid)
    positions = trace.positions
    cost = _weighted_cost_matrix(positions, grid_points, w)
    indices = monotone_assign(cost)
    s = grid[indices].astype(float)

    if refine:
        step = float(np.median(np.diff(grid))) if len(grid) > 1 else total
        s = _refine_by_projection(path, positions, w, s, step)

    return Correspondence(s, grid, indices)


def _refine_by_projection(
    path: NominalPath,
    positions: np.ndarray,
    weights: np.ndarray,
    s: np.ndarray,
    window_mm: float,
) -> np.ndarray:
    table = arc_length_table(path)
    pts = np.vstack([path.points, path.points[:1]]) if path.closed else path.points
    refined = np.empty_like(s)
    for i, (p, s_i) in enumerate(zip(positions, s)):
        lo_s = max(0.0, s_i - window_mm)
        hi_s = min(float(table[-1]), s_i + window_mm)
        seg_lo = max(0, int(np.searchsorted(table, lo_s, side="right")) - 1)
        seg_hi = min(len(table) - 2, int(np.searchsorted(table, hi_s, side="right")) - 1)
        best_cost = math.inf
        best_s = s_i
        for k in range(seg_lo, seg_hi + 1):
            a, b = pts[k], pts[k + 1]
            d = b - a
            denom = float(np.sum(weights * d * d))
            u = 0.0 if denom <= 0 else float(np.sum(weights * (p - a) * d) / denom)
            u = min(1.0, max(0.0, u))
            q = a + u * d
            c = float(np.sum(weights * (p - q) ** 2))
            if c < best_cost:
                best_cost = c
                best_s = float(table[k] + u * (table[k + 1] - table[k]))
        refined[i] = best_s
    # Keep the assignment monotone.
    np.maximum.accumulate(refined, out=refined)
    return refined


@dataclass(frozen=True)
class FusedPath:
    """CAD positions + demonstrated orientations + speeds, per waypoint."""

    positions: np.ndarray  # (N, 3) mm
    rotations: np.ndarray  # (N, 3, 3)
    speeds: np.ndarray  # (N,) mm/s
    s_mm: np.ndarray  # (N,) strictly increasing arc length
    frame: str

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        rot = np.asarray(self.rotations, dtype=float)
        spd = np.asarray(self.speeds, dtype=float)
        s = np.asarray(self.s_mm, dtype=float)
        n = len(pos)
        if rot.shape != (n, 3, 3) or spd.shape != (n,) or s.shape != (n,):
            raise ContractError("fused path arrays disagree on length")
        if n < 1:
            raise ContractError("fused path needs at least one waypoint")
        if np.any(spd <= 0):
            raise ContractError("waypoint speeds must be positive")
        if np.any(np.diff(s) <= 0):
            raise ContractError("arc lengths must be strictly increasing")
        for name, arr in (("positions", pos), ("rotations", rot), ("speeds", spd), ("s_mm", s)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.positions)

    def subset(self, indices: Sequence[int]) -> "FusedPath":
        idx = np.asarray(indices, dtype=int)
        return FusedPath(
            self.positions[idx], self.rotations[idx], self.speeds[idx], self.s_mm[idx], self.frame
        )

    def with_waypoint(
        self, index: int, rotation: np.ndarray | None = None, speed: float | None = None
    ) -> "FusedPath":
        rot = self.rotations.copy()
        spd = self.speeds.copy()
        if rotation is not None:
            rot[index] = rotation
        if speed is not None:
            spd[index] = speed
        return FusedPath(self.positions, rot, spd, self.s_mm, self.frame)


def _aligned_quaternions(rotations: Sequence[np.ndarray]) -> np.ndarray:
    quats = np.array([quat_from_matrix(r) for r in rotations])
    for i in range(1, len(quats)):
        if float(np.dot(quats[i], quats[i - 1])) < 0.0:
            quats[i] = -quats[i]
    return quats


def _bracket(s_samples: np.ndarray, s: float) -> tuple[int, int, float]:
    hi = int(np.searchsorted(s_samples, s, side="left"))
    if hi <= 0:
        return 0, 0, 0.0
    if hi >= len(s_samples):
        return len(s_samples) - 1, len(s_samples) - 1, 0.0
    lo = hi - 1
    width = float(s_samples[hi] - s_samples[lo])
    u = 0.0 if width <= 0.0 else (s - float(s_samples[lo])) / width
    return lo, hi, u


def fuse(
    path: NominalPath,
    trace: "DemonstrationTrace",
    corr: Correspondence,
    *,
    orientation_window_s: float = 0.2,
    speed_window_s: float = 0.2,
    speed_clamp_mm_s: tuple[float, float] = (1.0, 1000.0),
) -> FusedPath:
    """Build waypoints: CAD position, demonstrated orientation, speed.

    Positions are the path vertices verbatim. Orientation at a waypoint is the
    window-smoothed quaternion mean of the demonstration samples whose times
    bracket the waypoint (plain shortest-arc interpolation when the window is
    zero). Speed is the smoothed derivative of corresponded arc length over
    time, clamped to the configured envelope.
    """
    from .capture import orientations_as_matrices

    if len(corr) != len(trace):
        raise ContractError(
            f"correspondence length {len(corr)} does not match trace length {len(trace)}"
        )
    v_min, v_max = speed_clamp_mm_s
    if not (0.0 < v_min < v_max):
        raise ContractError("speed clamp must satisfy 0 < v_min < v_max")

    table = arc_length_table(path)
    waypoint_s = table[: len(path.points)]
    positions = path.points.copy()

    t = trace.times
    s_samples = np.asarray(corr.s_mm, dtype=float)
    rotations = [m for _, m in orientations_as_matrices(trace)]
    quats = _aligned_quaternions(rotations)

    raw_speed = np.gradient(s_samples, t)
    if speed_window_s > 0 and len(t) > 2:
        dt = float(np.median(np.diff(t)))
        win = max(1, int(round(speed_window_s / dt)))
        if win > 1:
            kernel = np.ones(win) / win
            raw_speed = np.convolve(raw_speed, kernel, mode="same")

    wp_rot = np.empty((len(positions), 3, 3))
    wp_speed = np.empty(len(positions))
    for k, s_k in enumerate(waypoint_s):
        lo, hi, u = _bracket(s_samples, float(s_k))
        t_k = t[lo] + u * (t[hi] - t[lo])
        if orientation_window_s > 0:
            mask = np.abs(t - t_k) <= orientation_window_s / 2.0
            if np.count_nonzero(mask) >= 2:
                q = quats[mask].sum(axis=0)
                wp_rot[k] = quat_to_matrix(q / np.linalg.norm(q))
            else:
                wp_rot[k] = slerp(rotations[lo], rotations[hi], u)
        else:
            wp_rot[k] = slerp(rotations[lo], rotations[hi], u)
        wp_speed[k] = raw_speed[lo] + u * (raw_speed[hi] - raw_speed[lo])
    wp_speed = np.clip(wp_speed, v_min, v_max)

    return FusedPath(positions, wp_rot, wp_speed, waypoint_s.copy(), path.frame)


def downsample(path: FusedPath, tol_pos_mm: float, tol_rot_deg: float) -> FusedPath:
    """Drop waypoints that interpolation between kept neighbors reconstructs
    within tolerance (recursive farthest-point splitting).

    Reconstruction is linear in position and shortest-arc in orientation,
    parameterized by arc-length fraction; endpoints are always kept.
    """
    if tol_pos_mm <= 0 or tol_rot_deg <= 0:
        raise ContractError("tolerances must be positive")
    n = len(path)
    if n <= 2:
        return path
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    tol_rot_rad = math.radians(tol_rot_deg)
    from .geometry import geodesic_angle

    while stack:
        a, b = stack.pop()
        if b - a < 2:
            continue
        worst = -1.0
        split = -1
        sa, sb = path.s_mm[a], path.s_mm[b]
        for j in range(a + 1, b):
            u = (path.s_mm[j] - sa) / (sb - sa)
            p_hat = path.positions[a] + u * (path.positions[b] - path.positions[a])
            pos_err = float(np.linalg.norm(path.positions[j] - p_hat))
            r_hat = slerp(path.rotations[a], path.rotations[b], float(u))
            rot_err = geodesic_angle(path.rotations[j], r_hat)
            dev = max(pos_err / tol_pos_mm, rot_err / tol_rot_rad)
            if dev > worst:
                worst = dev
                split = j
        if worst > 1.0:
            keep[split] = True
            stack.append((a, split))
            stack.append((split, b))
    return path.subset(np.flatnonzero(keep))


def to_robot_frame(
    path: FusedPath,
    graph: "FrameGraph",
    *,
    mount: RigidTransform | None = None,
    sensor_frame: str = "S",
    robot_frame: str = "R",
) -> FusedPath:
    """Map a fused path into the robot base frame.

    Positions were declared in the path's frame (CAD), orientations are marker
    orientations in the sensor frame; each maps through its own calibration
    leg. ``mount`` is the marker-to-tool transform (rotation part used).
    """
    pos_t = graph.resolve(robot_frame, path.frame)
    rot_s = graph.resolve(robot_frame, sensor_frame).rotation
    mount_rot = mount.rotation if mount is not None else np.eye(3)
    positions = pos_t.apply(path.positions)
    rotations = np.einsum("ab,nbc,cd->nad", rot_s, path.rotations, mount_rot)
    return FusedPath(positions, rotations, path.speeds, path.s_mm, robot_frame)
