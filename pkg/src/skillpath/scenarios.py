"""Built-in synthesis scenarios for demos and tests.

``rectangle`` mirrors the tracker-accuracy experiment: a flat rectangle in the
xy plane whose synthesized trace shows the range-dependent z drift while x/y
stay close. ``glass_contour`` is a curved closed contour shaped like an
automotive side window (slight z dome) for end-to-end fixtures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .geometry import euler_zyx_to_matrix, rot_x
from .pathfusion import NominalPath

Profile = Callable[[float, float], np.ndarray]


def profile_identity(s: float, total: float) -> np.ndarray:
    return np.eye(3)


def profile_constant_down(s: float, total: float) -> np.ndarray:
    # Tool z pointing down, the glue-gun rest pose.
    return rot_x(math.pi)


def profile_gentle_wobble(s: float, total: float) -> np.ndarray:
    """Downward-pointing tool with slow, smooth lead/tilt variation.

    Periodic in s/total so closed contours stay continuous at the seam.
    """
    w = 2.0 * math.pi * s / total
    psi = 0.35 * math.sin(w)
    theta = 0.17 * math.sin(2.0 * w + 1.0)
    phi = math.pi + 0.14 * math.cos(w)
    return euler_zyx_to_matrix((psi, theta, phi))


PROFILES: dict[str, Profile] = {
    "identity": profile_identity,
    "constant_down": profile_constant_down,
    "gentle_wobble": profile_gentle_wobble,
}


@dataclass(frozen=True)
class Scenario:
    name: str
    path: NominalPath
    speed_mm_s: float
    sample_rate_hz: float
    receptor_mm: tuple[float, float, float]
    profile: str

    @property
    def orientation_profile(self) -> Profile:
        return PROFILES[self.profile]


def rectangle_path() -> NominalPath:
    pts = np.array(
        [[0.0, 0.0, 0.0], [800.0, 0.0, 0.0], [800.0, 500.0, 0.0], [0.0, 500.0, 0.0]]
    )
    return NominalPath(pts, closed=True, frame="F")


def glass_contour_path(n_points: int = 1200) -> NominalPath:
    """Rounded closed contour with a slight dome along x (window-like)."""
    a, b = 350.0, 210.0  # half extents
    cx, cy = 350.0, 210.0
    t = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
    # Superellipse exponent 4: rounded-rectangle silhouette, smooth everywhere.
    x = cx + a * np.sign(np.cos(t)) * np.abs(np.cos(t)) ** 0.5
    y = cy + b * np.sign(np.sin(t)) * np.abs(np.sin(t)) ** 0.5
    z = 20.0 * (1.0 - ((x - cx) / a) ** 2)
    return NominalPath(np.stack([x, y, z], axis=1), closed=True, frame="F")


def rectangle_scenario() -> Scenario:
    return Scenario(
        name="rectangle",
        path=rectangle_path(),
        speed_mm_s=100.0,
        sample_rate_hz=60.0,
        receptor_mm=(-200.0, -250.0, 400.0),
        profile="gentle_wobble",
    )


def glass_contour_scenario() -> Scenario:
    return Scenario(
        name="glass_contour",
        path=glass_contour_path(),
        speed_mm_s=80.0,
        sample_rate_hz=60.0,
        receptor_mm=(-250.0, -250.0, 350.0),
        profile="gentle_wobble",
    )


BUILTIN_SCENARIOS = {
    "rectangle": rectangle_scenario,
    "glass_contour": glass_contour_scenario,
}


def get_scenario(name: str) -> Scenario:
    try:
        return BUILTIN_SCENARIOS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown scenario {name!r}; built-ins: {sorted(BUILTIN_SCENARIOS)}"
        ) from None
