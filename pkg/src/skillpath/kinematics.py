"""Six-axis serial arm model: DH forward kinematics, closed-form inverse
kinematics for spherical-wrist arms, and fused-path validation.

The solver covers the common industrial 6R layout (vertical shoulder with an
optional lateral offset, planar upper arm/forearm, three wrist axes meeting in
a point); the joints 1-3 place the wrist center and joints 4-6 realize the
remaining orientation as a z-y-z decomposition. Classic (distal) DH
convention: A_i = Rz(theta_i) Tz(d_i) Tx(a_i) Rx(alpha_i).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .errors import ConfigError, ContractError, UnsupportedModelError
from .geometry import RigidTransform, geodesic_angle, normalize_angle
from .pathfusion import FusedPath

_STRUCT_TOL = 1e-9
_WRIST_SINGULAR_EPS = 1e-8


@dataclass(frozen=True)
class ArmModel:
    name: str
    a_mm: np.ndarray  # (6,)
    alpha_rad: np.ndarray  # (6,)
    d_mm: np.ndarray  # (6,)
    theta_offset_rad: np.ndarray  # (6,)
    joint_limits_rad: np.ndarray  # (6, 2) min, max
    max_joint_speed_rad_s: np.ndarray  # (6,)
    tool: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        for attr in ("a_mm", "alpha_rad", "d_mm", "theta_offset_rad", "max_joint_speed_rad_s"):
            arr = np.asarray(getattr(self, attr), dtype=float).reshape(6)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        lim = np.asarray(self.joint_limits_rad, dtype=float).reshape(6, 2)
        if np.any(lim[:, 0] >= lim[:, 1]):
            raise ConfigError("joint limits must satisfy min < max")
        lim.setflags(write=False)
        object.__setattr__(self, "joint_limits_rad", lim)

    def analytic_ik_unsupported_reason(self) -> str | None:
        """None when the closed-form solver applies, else a human reason."""
        a, al, d = self.a_mm, self.alpha_rad, self.d_mm
        checks = [
            (abs(abs(al[0]) - math.pi / 2) < _STRUCT_TOL, "alpha_1 must be +/-90 deg"),
            (abs(al[1]) < _STRUCT_TOL, "alpha_2 must be 0"),
            (abs(abs(al[2]) - math.pi / 2) < _STRUCT_TOL, "alpha_3 must be +/-90 deg"),
            (abs(abs(al[3]) - math.pi / 2) < _STRUCT_TOL, "alpha_4 must be +/-90 deg"),
            (abs(al[3] + al[4]) < _STRUCT_TOL, "alpha_5 must equal -alpha_4"),
            (abs(al[5]) < _STRUCT_TOL, "alpha_6 must be 0"),
            (abs(a[3]) < _STRUCT_TOL and abs(a[4]) < _STRUCT_TOL and abs(d[4]) < _STRUCT_TOL,
             "axes 4, 5 and 6 must intersect (a4 = a5 = d5 = 0)"),
            (abs(a[5]) < _STRUCT_TOL, "a6 must be 0"),
            (a[1] > _STRUCT_TOL, "a2 (upper arm) must be positive"),
        ]
        for ok, reason in checks:
            if not ok:
                return reason
        return None


def _dh_matrix(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def fk(model: ArmModel, q: Sequence[float]) -> RigidTransform:
    """Pose of the TCP (flange chained with the tool transform)."""
    q = np.asarray(q, dtype=float).reshape(6)
    if not np.all(np.isfinite(q)):
        raise ContractError("joint angles must be finite")
    m = np.eye(4)
    for i in range(6):
        m = m @ _dh_matrix(
            model.a_mm[i], model.alpha_rad[i], model.d_mm[i], q[i] + model.theta_offset_rad[i]
        )
    flange = RigidTransform(m[:3, :3], m[:3, 3])
    return flange.compose(model.tool)


def _flange_fk_rotation_123(model: ArmModel, th1: float, th2: float, th3: float) -> np.ndarray:
    m = np.eye(4)
    for i, th in enumerate((th1, th2, th3)):
        m = m @ _dh_matrix(model.a_mm[i], model.alpha_rad[i], model.d_mm[i], th)
    return m[:3, :3]


def _zyz_angles(r: np.ndarray, singular_first: float) -> list[tuple[float, float, float]]:
    """Decompose r = Rz(a) Ry(b) Rz(c); both wrist branches, or the singular
    convention with ``a`` pinned to ``singular_first``."""
    sy = math.hypot(r[0, 2], r[1, 2])
    if sy < _WRIST_SINGULAR_EPS:
        if r[2, 2] > 0.0:  # b == 0: free split of a + c
            ac = math.atan2(r[1, 0], r[0, 0])
            return [(singular_first, 0.0, ac - singular_first)]
        # b == pi: free split of a - c
        ac = math.atan2(-r[0, 1], -r[0, 0])
        return [(singular_first, math.pi, singular_first - ac)]
    out = []
    for sign in (1.0, -1.0):
        a = math.atan2(sign * r[1, 2], sign * r[0, 2])
        b = math.atan2(sign * sy, r[2, 2])
        c = math.atan2(sign * r[2, 1], -sign * r[2, 0])
        out.append((a, b, c))
    return out


@dataclass(frozen=True)
class IkSolution:
    q: np.ndarray  # (6,) rad, normalized to (-pi, pi]
    within_limits: bool

    def __post_init__(self):
        arr = np.asarray(self.q, dtype=float).reshape(6)
        arr.setflags(write=False)
        object.__setattr__(self, "q", arr)


def ik(
    model: ArmModel, target: RigidTransform, *, wrist_hint_q4: float = 0.0
) -> list[IkSolution]:
    """All closed-form joint solutions reaching the target TCP pose.

    Up to eight branches (shoulder/elbow/wrist); out-of-limit solutions are
    returned flagged, an unreachable target yields an empty list. At a wrist
    singularity joint 4 is pinned to ``wrist_hint_q4`` and the free rotation
    folds into joint 6.
    """
    reason = model.analytic_ik_unsupported_reason()
    if reason is not None:
        raise UnsupportedModelError(reason)

    flange = target.compose(model.tool.inverse())
    r06 = flange.rotation
    p = flange.translation
    a1, a2, a3 = model.a_mm[0], model.a_mm[1], model.a_mm[2]
    d1, d4, d6 = model.d_mm[0], model.d_mm[3], model.d_mm[5]
    sa1 = 1.0 if model.alpha_rad[0] > 0 else -1.0
    sa3 = 1.0 if model.alpha_rad[2] > 0 else -1.0
    sa4 = 1.0 if model.alpha_rad[3] > 0 else -1.0
    lateral = -sa1 * (model.d_mm[1] + model.d_mm[2])

    pc = p - d6 * r06[:, 2]
    rho_sq = pc[0] ** 2 + pc[1] ** 2
    sigma_sq = rho_sq - lateral**2
    if sigma_sq < -1e-9:
        return []
    sigma = math.sqrt(max(0.0, sigma_sq))
    y1 = sa1 * (pc[2] - d1)
    reach_sq = a3**2 + d4**2

    solutions: list[IkSolution] = []
    seen: set[tuple] = set()
    base_angle = math.atan2(pc[1], pc[0])
    for shoulder in (1.0, -1.0):
        u = shoulder * sigma - a1
        th1 = base_angle - math.atan2(lateral, shoulder * sigma)
        r_sq = u**2 + y1**2
        g = (r_sq - a2**2 - reach_sq) / (2.0 * a2)
        h_sq = reach_sq - g**2
        if h_sq < -1e-9:
            continue
        h_mag = math.sqrt(max(0.0, h_sq))
        for elbow in (1.0, -1.0):
            h = elbow * h_mag
            th3 = math.atan2(h, g) - math.atan2(-sa3 * d4, a3)
            th2 = math.atan2(y1, u) - math.atan2(h, g + a2)
            r03 = _flange_fk_rotation_123(model, th1, th2, th3)
            r36 = r03.T @ r06
            hint_th4 = wrist_hint_q4 + model.theta_offset_rad[3]
            for za, zb, zc in _zyz_angles(r36, hint_th4):
                if sa4 > 0:
                    th4, th5, th6 = za, -zb, zc
                else:
                    th4, th5, th6 = za, zb, zc
                theta = np.array([th1, th2, th3, th4, th5, th6])
                q = np.array(
                    [normalize_angle(t - o) for t, o in zip(theta, model.theta_offset_rad)]
                )
                check = fk(model, q)
                if (
                    np.max(np.abs(check.translation - target.translation)) > 1e-6
                    or geodesic_angle(check.rotation, target.rotation) > 1e-6
                ):
                    continue
                key = tuple(np.round(q, 9))
                if key in seen:
                    continue
                seen.add(key)
                lim = model.joint_limits_rad
                within = bool(np.all(q >= lim[:, 0] - 1e-9) and np.all(q <= lim[:, 1] + 1e-9))
                solutions.append(IkSolution(q, within))
    return solutions


@dataclass(frozen=True)
class ValidationPolicy:
    max_cartesian_speed_mm_s: float = 500.0
    max_orientation_rate_deg_s: float = 180.0
    max_waypoint_gap_mm: float = 1000.0
    max_joint_jump_rad: float = 0.8

    def to_dict(self) -> dict:
        return {
            "max_cartesian_speed_mm_s": self.max_cartesian_speed_mm_s,
            "max_orientation_rate_deg_s": self.max_orientation_rate_deg_s,
            "max_waypoint_gap_mm": self.max_waypoint_gap_mm,
            "max_joint_jump_rad": self.max_joint_jump_rad,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ValidationPolicy":
        return ValidationPolicy(**doc)


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str
    detail: str

    def to_dict(self) -> dict:
        return {"index": self.index, "kind": self.kind, "detail": self.detail}


@dataclass(frozen=True)
class WaypointCheck:
    reachable: bool
    q: list[float] | None
    limit_margins_rad: list[float] | None
    joint_speeds_rad_s: list[float] | None

    def to_dict(self) -> dict:
        return {
            "reachable": self.reachable,
            "q_rad": self.q,
            "limit_margins_rad": self.limit_margins_rad,
            "joint_speeds_rad_s": self.joint_speeds_rad_s,
        }


@dataclass(frozen=True)
class ValidationReport:
    waypoints: tuple[WaypointCheck, ...]
    violations: tuple[Violation, ...]

    @property
    def passed(self) -> bool:
        return len(self.violations) == 0

    def violations_at(self, index: int) -> list[Violation]:
        return [v for v in self.violations if v.index == index]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "waypoints": [w.to_dict() for w in self.waypoints],
            "violations": [v.to_dict() for v in self.violations],
        }

    @staticmethod
    def from_dict(doc: dict) -> "ValidationReport":
        waypoints = tuple(
            WaypointCheck(
                w["reachable"], w["q_rad"], w["limit_margins_rad"], w["joint_speeds_rad_s"]
            )
            for w in doc["waypoints"]
        )
        violations = tuple(Violation(v["index"], v["kind"], v["detail"]) for v in doc["violations"])
        return ValidationReport(waypoints, violations)


def _select_first(model: ArmModel, solutions: list[IkSolution]) -> IkSolution:
    # Prefer in-limit solutions with the largest worst-case limit margin.
    def margin(sol: IkSolution) -> float:
        lim = model.joint_limits_rad
        return float(np.min(np.minimum(sol.q - lim[:, 0], lim[:, 1] - sol.q)))

    in_limits = [s for s in solutions if s.within_limits]
    pool = in_limits if in_limits else solutions
    best = pool[0]
    best_m = margin(best)
    for s in pool[1:]:
        m = margin(s)
        if m > best_m:
            best, best_m = s, m
    return best


def _select_continuous(prev_q: np.ndarray, solutions: list[IkSolution]) -> IkSolution:
    best = solutions[0]
    best_d = float(np.max(np.abs(best.q - prev_q)))
    for s in solutions[1:]:
        d = float(np.max(np.abs(s.q - prev_q)))
        if d < best_d:
            best, best_d = s, d
    return best


def validate(model: ArmModel, path: FusedPath, policy: ValidationPolicy) -> ValidationReport:
    """Check a robot-frame fused path against the arm model and motion policy.

    The IK branch at each waypoint is chosen for continuity (smallest joint
    jump from the previous waypoint); segment timing derives from commanded
    speed and arc distance, so implied joint and orientation rates can be
    checked without timestamps.
    """
    if path.frame != "R":
        raise ContractError(f"validation expects a path in frame 'R', got {path.frame!r}")
    lim = model.joint_limits_rad
    checks: list[WaypointCheck] = []
    violations: list[Violation] = []
    prev_q: np.ndarray | None = None
    chosen: list[np.ndarray | None] = []

    for k in range(len(path)):
        target = RigidTransform(path.rotations[k], path.positions[k])
        hint = float(prev_q[3]) if prev_q is not None else 0.0
        sols = ik(model, target, wrist_hint_q4=hint)
        if not sols:
            checks.append(WaypointCheck(False, None, None, None))
            chosen.append(None)
            violations.append(Violation(k, "unreachable", "no inverse kinematics solution"))
            continue
        sel = _select_continuous(prev_q, sols) if prev_q is not None else _select_first(model, sols)
        q = sel.q
        margins = np.minimum(q - lim[:, 0], lim[:, 1] - q)
        if not sel.within_limits:
            worst = int(np.argmin(margins))
            violations.append(
                Violation(
                    k,
                    "joint_limit",
                    f"joint {worst + 1} exceeds its limit by "
                    f"{math.degrees(-float(margins[worst])):.2f} deg",
                )
            )
        checks.append(WaypointCheck(True, [float(v) for v in q], [float(v) for v in margins], None))
        chosen.append(q)
        prev_q = q

    # Segment checks; timing from commanded speed over arc distance.
    for k in range(1, len(path)):
        ds = float(path.s_mm[k] - path.s_mm[k - 1])
        dt = ds / float(path.speeds[k])
        gap = float(np.linalg.norm(path.positions[k] - path.positions[k - 1]))
        if gap > policy.max_waypoint_gap_mm:
            violations.append(
                Violation(k, "waypoint_gap", f"{gap:.1f} mm > {policy.max_waypoint_gap_mm} mm")
            )
        if float(path.speeds[k]) > policy.max_cartesian_speed_mm_s:
            violations.append(
                Violation(
                    k,
                    "cartesian_speed",
                    f"{float(path.speeds[k]):.1f} mm/s > {policy.max_cartesian_speed_mm_s} mm/s",
                )
            )
        rate = math.degrees(geodesic_angle(path.rotations[k - 1], path.rotations[k])) / dt
        if rate > policy.max_orientation_rate_deg_s:
            violations.append(
                Violation(
                    k,
                    "orientation_rate",
                    f"{rate:.1f} deg/s > {policy.max_orientation_rate_deg_s} deg/s",
                )
            )
        qa, qb = chosen[k - 1], chosen[k]
        if qa is None or qb is None:
            continue
        jump = np.abs(qb - qa)
        if float(np.max(jump)) > policy.max_joint_jump_rad:
            violations.append(
                Violation(
                    k,
                    "joint_jump",
                    f"joint-space jump {float(np.max(jump)):.3f} rad > "
                    f"{policy.max_joint_jump_rad} rad",
                )
            )
        speeds = jump / dt
        over = speeds > model.max_joint_speed_rad_s
        if np.any(over):
            j = int(np.argmax(speeds - model.max_joint_speed_rad_s))
            violations.append(
                Violation(
                    k,
                    "joint_speed",
                    f"joint {j + 1} needs {float(speeds[j]):.3f} rad/s > "
                    f"{float(model.max_joint_speed_rad_s[j]):.3f} rad/s",
                )
            )
        checks[k] = WaypointCheck(
            checks[k].reachable,
            checks[k].q,
            checks[k].limit_margins_rad,
            [float(v) for v in speeds],
        )

    return ValidationReport(tuple(checks), tuple(violations))


_MODEL_KEYS = {"version", "name", "dh", "joint_limits_deg", "max_joint_speed_deg_s", "tool"}
_DH_KEYS = {"a_mm", "alpha_deg", "d_mm", "theta_offset_deg"}


def load_arm_model(source: str | IO[str] | dict) -> ArmModel:
    """Load an arm model document (JSON, angles in degrees)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source if isinstance(source, str) else source.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    extra = set(doc) - _MODEL_KEYS
    if extra:
        raise ConfigError(f"unknown keys in arm model: {sorted(extra)}")
    if doc.get("version") != 1:
        raise ConfigError(f"unsupported arm model version {doc.get('version')!r}")
    rows = doc.get("dh")
    if not isinstance(rows, list) or len(rows) != 6:
        raise ConfigError("'dh' must hold exactly 6 rows")
    for i, row in enumerate(rows):
        if set(row) != _DH_KEYS:
            raise ConfigError(f"dh row {i}: keys must be {sorted(_DH_KEYS)}")
    tool_doc = doc.get("tool", {"xyz_mm": [0, 0, 0], "fixed_xyz_deg": [0, 0, 0]})
    from .geometry import fixed_xyz_to_matrix

    tool = RigidTransform(
        fixed_xyz_to_matrix(np.deg2rad(tool_doc["fixed_xyz_deg"])),
        np.asarray(tool_doc["xyz_mm"], dtype=float),
    )
    limits = np.deg2rad(np.asarray(doc["joint_limits_deg"], dtype=float))
    return ArmModel(
        name=doc.get("name", "unnamed"),
        a_mm=[row["a_mm"] for row in rows],
        alpha_rad=np.deg2rad([row["alpha_deg"] for row in rows]),
        d_mm=[row["d_mm"] for row in rows],
        theta_offset_rad=np.deg2rad([row["theta_offset_deg"] for row in rows]),
        joint_limits_rad=limits,
        max_joint_speed_rad_s=np.deg2rad(np.asarray(doc["max_joint_speed_deg_s"], dtype=float)),
        tool=tool,
    )


def example_spherical_wrist_model() -> ArmModel:
    """A nominal mid-size 6R arm in the solver's class.

    Geometry is plausible for the hp6 class of arms but is NOT vendor
    verified; treat it as a test fixture and starting point for real cells.
    """
    return ArmModel(
        name="generic-6r-nominal",
        a_mm=[150.0, 570.0, 155.0, 0.0, 0.0, 0.0],
        alpha_rad=[-math.pi / 2, 0.0, -math.pi / 2, math.pi / 2, -math.pi / 2, 0.0],
        d_mm=[450.0, 0.0, 0.0, 640.0, 0.0, 95.0],
        theta_offset_rad=[0.0, -math.pi / 2, 0.0, 0.0, 0.0, 0.0],
        joint_limits_rad=np.deg2rad(
            [[-170, 170], [-90, 150], [-170, 190], [-180, 180], [-135, 135], [-360, 360]]
        ),
        max_joint_speed_rad_s=np.deg2rad([140.0, 160.0, 170.0, 340.0, 340.0, 520.0]),
        tool=RigidTransform.identity(),
    )
