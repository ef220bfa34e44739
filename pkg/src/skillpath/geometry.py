"""Rotation conventions and rigid transforms.

The magnetic tracker reports intrinsic z-y'-x'' Euler angles (azimuth,
elevation, roll); the robot controller consumes extrinsic x-y-z angles about
the static axes. Both compose to the same matrix Rz(psi) @ Ry(theta) @ Rx(phi),
which is the only rotation representation used internally - Euler triples
exist at I/O boundaries only. Angles are radians unless a name says degrees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidAngleError, InvalidRotationError

# Orthonormality defect below this is accepted verbatim.
ORTHO_TOL = 1e-9
# Defect up to this is repaired by polar projection; beyond it is rejected.
REPAIR_TOL = 1e-6
# |cos(theta)| below this counts as gimbal lock during angle extraction.
GIMBAL_EPS = 1e-8


class EulerZYX(NamedTuple):
    """Intrinsic z-y'-x'' angles: azimuth psi, elevation theta, roll phi."""

    psi: float
    theta: float
    phi: float


class FixedXYZ(NamedTuple):
    """Extrinsic x-y-z angles about the static axes: phi, theta, psi."""

    phi: float
    theta: float
    psi: float


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(a, math.tau)
    return math.pi if a <= -math.pi else a


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _require_finite(*angles: float) -> None:
    for a in angles:
        if not math.isfinite(a):
            raise InvalidAngleError(f"non-finite angle: {a!r}")


def euler_zyx_to_matrix(e: EulerZYX | Sequence[float]) -> np.ndarray:
    """Rotation matrix for intrinsic z-y'-x'' angles (chained axis rotations)."""
    psi, theta, phi = e
    _require_finite(psi, theta, phi)
    return rot_z(psi) @ rot_y(theta) @ rot_x(phi)


def fixed_xyz_to_matrix(f: FixedXYZ | Sequence[float]) -> np.ndarray:
    """Rotation matrix for extrinsic x-y-z angles.

    Rotations about the static axes left-multiply, so the closed form is the
    same matrix as the intrinsic z-y'-x'' composition with psi and phi swapped.
    Written out termwise (rather than as chained products) so the two
    construction routes stay independent of each other.
    """
    phi, theta, psi = f
    _require_finite(phi, theta, psi)
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
            [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
            [-st, ct * sf, ct * cf],
        ]
    )


def orthonormality_defect(r: np.ndarray) -> float:
    """max |R^T R - I|, the measure used by the accept/repair/reject policy."""
    r = np.asarray(r, dtype=float)
    return float(np.max(np.abs(r.T @ r - np.eye(3))))


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Nearest proper rotation by polar projection (SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=float))
    if np.linalg.det(u @ vt) < 0.0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
    return u @ vt


def ensure_rotation(r: np.ndarray, *, repair: bool = True) -> np.ndarray:
    """Validate a 3x3 rotation per the import policy.

    Defect <= 1e-9 passes through untouched, defect in (1e-9, 1e-6] is
    re-orthonormalized when ``repair`` is set, anything worse is rejected.
    """
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise InvalidRotationError(f"expected 3x3 matrix, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise InvalidRotationError("rotation matrix has non-finite entries")
    defect = orthonormality_defect(r)
    if defect <= ORTHO_TOL and abs(np.linalg.det(r) - 1.0) <= ORTHO_TOL * 10:
        return r
    if defect <= REPAIR_TOL and repair and np.linalg.det(r) > 0.0:
        return orthonormalize(r)
    raise InvalidRotationError(
        f"matrix is not a rotation (orthonormality defect {defect:.3e})"
    )


def matrix_to_fixed_xyz(r: np.ndarray) -> FixedXYZ:
    """Extract extrinsic x-y-z angles from a rotation matrix.

    At gimbal lock (|cos theta| < 1e-8) phi is pinned to 0 and the remaining
    freedom folds into psi, so output is deterministic.
    """
    r = ensure_rotation(r)
    st = -r[2, 0]
    st = min(1.0, max(-1.0, float(st)))
    theta = math.asin(st)
    if math.sqrt(max(0.0, 1.0 - st * st)) < GIMBAL_EPS:
        phi = 0.0
        psi = math.atan2(-r[0, 1], r[1, 1])
    else:
        psi = math.atan2(r[1, 0], r[0, 0])
        phi = math.atan2(r[2, 1], r[2, 2])
    return FixedXYZ(normalize_angle(phi), theta, normalize_angle(psi))


def matrix_to_euler_zyx(r: np.ndarray) -> EulerZYX:
    """Extract intrinsic z-y'-x'' angles (the tracker's convention)."""
    f = matrix_to_fixed_xyz(r)
    return EulerZYX(psi=f.psi, theta=f.theta, phi=f.phi)


@dataclass(frozen=True)
class RigidTransform:
    """A proper rotation plus translation in millimeters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = ensure_rotation(self.rotation)
        tr = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(tr)):
            raise InvalidRotationError("translation has non-finite entries")
        rot = rot.copy()
        tr = tr.copy()
        rot.setflags(write=False)
        tr.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "RigidTransform":
        return RigidTransform(np.eye(3), np.array([x, y, z], dtype=float))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self applied after other: (self o other) p = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map a 3-vector or an (N, 3) block of points."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def almost_equal(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        return bool(
            np.max(np.abs(self.rotation - other.rotation)) <= tol
            and np.max(np.abs(self.translation - other.translation)) <= tol
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(t: RigidTransform) -> RigidTransform:
    return t.inverse()


def geodesic_angle(r0: np.ndarray, r1: np.ndarray) -> float:
    """Rotation angle (radians) taking r0 to r1 along the shortest arc."""
    c = (np.trace(np.asarray(r0).T @ np.asarray(r1)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, float(c))))


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix (Shepperd's method)."""
    r = np.asarray(r, dtype=float)
    t = np.trace(r)
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        )
    elif r[1, 1] >= r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array(
            [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array(
            [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        )
    return q / np.linalg.norm(q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def slerp(r0: np.ndarray, r1: np.ndarray, u: float) -> np.ndarray:
    """Shortest-arc interpolation between two rotations, u in [0, 1]."""
    q0 = quat_from_matrix(r0)
    q1 = quat_from_matrix(r1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    dot = min(1.0, dot)
    if dot > 1.0 - 1e-12:
        q = q0 + u * (q1 - q0)
    else:
        omega = math.acos(dot)
        so = math.sin(omega)
        q = (math.sin((1.0 - u) * omega) / so) * q0 + (math.sin(u * omega) / so) * q1
    return quat_to_matrix(q / np.linalg.norm(q))


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-15:
        return np.eye(3)
    x, y, z = axis / n
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)
