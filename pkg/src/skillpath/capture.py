"""Demonstration traces: parsing, synthesis, and segmentation.

A trace is what the magnetic tracker hands us: timestamped positions (mm, in
the sensor frame) and intrinsic z-y-x Euler angles (degrees). Positions carry
per-axis trust flags because the tracker's z readings drift badly with
receptor-marker range while x/y stay usable; downstream matching reads these
flags to weight axes instead of hard-coding the behavior.

``synthesize_trace`` generates corrupted traces plus their ground truth so the
whole pipeline can be exercised without tracker hardware.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import IO, Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateInputError, TraceParseError
from .geometry import (
    EulerZYX,
    axis_angle_matrix,
    euler_zyx_to_matrix,
    matrix_to_euler_zyx,
)
from .pathfusion import NominalPath, arc_length_table, evaluate_at

TRACE_MAGIC = "# skillpath-trace v1"
TRACE_HEADER = "t_s,x_mm,y_mm,z_mm,azimuth_deg,elevation_deg,roll_deg"

# Default per-axis positional trust; z is low-trust because its error grows
# with receptor range, x/y only pick up jitter and human wobble.
DEFAULT_TRUST = ("medium", "medium", "low")
TRUST_WEIGHTS = {"high": 1.0, "medium": 1.0, "low": 0.1}


@dataclass(frozen=True)
class DemonstrationSample:
    t: float
    position: np.ndarray  # (3,) mm, sensor frame
    orientation_deg: EulerZYX  # azimuth, elevation, roll as recorded
    trust: tuple[str, str, str] = DEFAULT_TRUST

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class TraceMeta:
    source_id: str = ""
    rate_hz: float | None = None


@dataclass(frozen=True)
class DemonstrationTrace:
    samples: tuple[DemonstrationSample, ...]
    meta: TraceMeta = TraceMeta()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if len(self.samples) < 2:
            raise DegenerateInputError("a trace needs at least 2 samples")
        if self.duration <= 0.0:
            raise DegenerateInputError("trace duration must be positive")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return self.samples[-1].t - self.samples[0].t

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.samples])

    @property
    def orientations_deg(self) -> np.ndarray:
        return np.array([s.orientation_deg for s in self.samples])


@dataclass(frozen=True)
class TrackerErrorModel:
    """Synthetic corruption mimicking the tracker's observed behavior."""

    z_drift_mm_at_max_range: float = 60.0
    drift_growth: str = "linear"  # or "quadratic"
    orientation_noise_deg: tuple[float, float] = (1.0, 5.0)  # per-sample magnitude range
    xy_jitter_mm: float = 1.0

    def __post_init__(self):
        lo, hi = self.orientation_noise_deg
        if self.z_drift_mm_at_max_range < 0 or self.xy_jitter_mm < 0 or lo < 0 or hi < lo:
            raise DegenerateInputError("error-model magnitudes must be non-negative")
        if self.drift_growth not in ("linear", "quadratic"):
            raise DegenerateInputError(f"unknown drift growth {self.drift_growth!r}")

    @staticmethod
    def noiseless() -> "TrackerErrorModel":
        return TrackerErrorModel(0.0, "linear", (0.0, 0.0), 0.0)


def parse_trace(stream: IO[str] | str, source_id: str = "") -> DemonstrationTrace:
    """Parse the trace CSV format. Errors carry the 1-based line number."""
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = stream.read().splitlines()
    if not lines or lines[0].strip() != TRACE_MAGIC:
        raise TraceParseError(f"bad magic line, expected {TRACE_MAGIC!r}", line=1)
    if len(lines) < 2 or lines[1].strip() != TRACE_HEADER:
        raise TraceParseError(f"bad header, expected {TRACE_HEADER!r}", line=2)
    samples = []
    prev_t = None
    for lineno, raw in enumerate(lines[2:], start=3):
        if not raw.strip():
            continue
        fields = raw.split(",")
        if len(fields) != 7:
            raise TraceParseError(f"expected 7 columns, got {len(fields)}", line=lineno)
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise TraceParseError(str(exc), line=lineno) from exc
        if not all(math.isfinite(v) for v in values):
            raise TraceParseError("non-finite field", line=lineno)
        t, x, y, z, az, el, roll = values
        if prev_t is not None and t <= prev_t:
            raise TraceParseError(
                f"timestamps must be strictly increasing ({t} after {prev_t})", line=lineno
            )
        prev_t = t
        samples.append(
            DemonstrationSample(t, np.array([x, y, z]), EulerZYX(az, el, roll))
        )
    if len(samples) < 2:
        raise TraceParseError("a trace needs at least 2 data rows")
    rate = (len(samples) - 1) / (samples[-1].t - samples[0].t)
    return DemonstrationTrace(tuple(samples), TraceMeta(source_id, rate))


def serialize_trace(trace: DemonstrationTrace) -> str:
    """Inverse of parse_trace; full-precision floats so round trips are exact."""
    lines = [TRACE_MAGIC, TRACE_HEADER]
    for s in trace.samples:
        fields = [s.t, *s.position, *s.orientation_deg]
        lines.append(",".join(repr(float(v)) for v in fields))
    return "\n".join(lines) + "\n"


def orientations_as_matrices(trace: DemonstrationTrace) -> list[tuple[float, np.ndarray]]:
    """Per-sample (t, rotation matrix); degrees converted once, here."""
    out = []
    for s in trace.samples:
        angles = np.deg2rad(np.asarray(s.orientation_deg, dtype=float))
        out.append((s.t, euler_zyx_to_matrix(angles)))
    return out


@dataclass(frozen=True)
class GroundTruth:
    """Uncorrupted twin of a synthesized trace, for test oracles."""

    trace: DemonstrationTrace
    s_mm: np.ndarray  # true arc length per sample
    speed_mm_s: np.ndarray  # true speed per sample

    def rotations(self) -> np.ndarray:
        return np.array([m for _, m in orientations_as_matrices(self.trace)])


def synthesize_trace(
    path: NominalPath,
    speed_mm_s: float | Callable[[float], float],
    model: TrackerErrorModel,
    seed: int,
    *,
    sample_rate_hz: float = 60.0,
    receptor_mm: Sequence[float] = (0.0, 0.0, 0.0),
    orientation_profile: Callable[[float, float], np.ndarray] | None = None,
    source_id: str = "synth",
) -> tuple[DemonstrationTrace, GroundTruth]:
    """Walk the path at the given speed and corrupt the readings.

    z picks up range-dependent drift that reaches ``z_drift_mm_at_max_range``
    at the sample farthest from the receptor; x/y get Gaussian jitter; the
    orientation is perturbed about a random axis by an angle drawn from the
    model's magnitude range. Deterministic for a fixed seed.
    """
    if sample_rate_hz <= 0:
        raise DegenerateInputError("sample rate must be positive")
    table = arc_length_table(path)
    total = float(table[-1])
    if total <= 0:
        raise DegenerateInputError("path has zero length")

    dt = 1.0 / sample_rate_hz
    if callable(speed_mm_s):
        speed_fn = speed_mm_s
    else:
        v = float(speed_mm_s)
        if v <= 0:
            raise DegenerateInputError("speed must be positive")
        speed_fn = lambda s: v  # noqa: E731

    times = [0.0]
    s_values = [0.0]
    speeds = [max(float(speed_fn(0.0)), 1e-9)]
    s = 0.0
    t = 0.0
    # Fixed-substep integration of ds/dt = v(s); deterministic and plenty
    # accurate at tracker rates.
    substeps = 8
    while s < total - 1e-9:
        for _ in range(substeps):
            s = min(total, s + max(float(speed_fn(s)), 1e-9) * dt / substeps)
        t += dt
        times.append(t)
        s_values.append(s)
        speeds.append(max(float(speed_fn(s)), 1e-9))
    if len(times) < 2:
        raise DegenerateInputError("path too short for the sample rate")

    times = np.array(times)
    s_values = np.array(s_values)
    speeds = np.array(speeds)
    positions = evaluate_at(path, s_values)

    if orientation_profile is None:
        rotations = [np.eye(3) for _ in s_values]
    else:
        rotations = [orientation_profile(float(sv), total) for sv in s_values]

    n = len(times)
    rng = np.random.default_rng(seed)
    jit = rng.normal(0.0, model.xy_jitter_mm, (n, 2)) if model.xy_jitter_mm > 0 else np.zeros((n, 2))
    axes = rng.normal(size=(n, 3))
    lo, hi = model.orientation_noise_deg
    noise_deg = rng.uniform(lo, hi, n)

    receptor = np.asarray(receptor_mm, dtype=float)
    ranges = np.linalg.norm(positions - receptor, axis=1)
    rmax = float(ranges.max())
    ratio = ranges / rmax if rmax > 0 else np.zeros(n)
    if model.drift_growth == "quadratic":
        ratio = ratio**2
    drift = model.z_drift_mm_at_max_range * ratio

    true_samples = []
    noisy_samples = []
    for i in range(n):
        true_angles = matrix_to_euler_zyx(rotations[i])
        true_deg = EulerZYX(*(math.degrees(a) for a in true_angles))
        true_samples.append(DemonstrationSample(float(times[i]), positions[i], true_deg))

        noisy_pos = positions[i].copy()
        noisy_pos[0] += jit[i, 0]
        noisy_pos[1] += jit[i, 1]
        noisy_pos[2] += drift[i]
        if noise_deg[i] > 0:
            wobble = axis_angle_matrix(axes[i], math.radians(noise_deg[i]))
            noisy_rot = rotations[i] @ wobble
        else:
            noisy_rot = rotations[i]
        noisy_angles = matrix_to_euler_zyx(noisy_rot)
        noisy_deg = EulerZYX(*(math.degrees(a) for a in noisy_angles))
        noisy_samples.append(DemonstrationSample(float(times[i]), noisy_pos, noisy_deg))

    meta = TraceMeta(source_id, sample_rate_hz)
    trace = DemonstrationTrace(tuple(noisy_samples), meta)
    truth = GroundTruth(DemonstrationTrace(tuple(true_samples), meta), s_values, speeds)
    return trace, truth


def planar_speed(trace: DemonstrationTrace, smooth_s: float = 0.0) -> np.ndarray:
    """Per-sample speed estimate from x/y only (z is untrusted)."""
    t = trace.times
    xy = trace.positions[:, :2]
    vx = np.gradient(xy[:, 0], t)
    vy = np.gradient(xy[:, 1], t)
    speed = np.hypot(vx, vy)
    if smooth_s > 0 and len(t) > 2:
        dt = float(np.median(np.diff(t)))
        win = max(1, int(round(smooth_s / dt)))
        if win > 1:
            kernel = np.ones(win) / win
            speed = np.convolve(speed, kernel, mode="same")
    return speed


def segment_trace(
    trace: DemonstrationTrace, speed_floor_mm_s: float, dwell_s: float
) -> list[DemonstrationTrace]:
    """Split at dwell periods (planar speed below the floor for >= dwell_s).

    Returns the maximal active segments in order; short hesitations stay
    inside their segment. A fully stationary trace yields an empty list.
    """
    speed = planar_speed(trace, smooth_s=dwell_s)
    t = trace.times
    n = len(trace)
    inactive = speed < speed_floor_mm_s

    separators = np.zeros(n, dtype=bool)
    i = 0
    while i < n:
        if inactive[i]:
            j = i
            while j + 1 < n and inactive[j + 1]:
                j += 1
            run_duration = t[j] - t[i]
            # Runs touching either end of the trace always separate; interior
            # runs must persist for at least dwell_s.
            if run_duration >= dwell_s or i == 0 or j == n - 1:
                separators[i : j + 1] = True
            i = j + 1
        else:
            i += 1

    segments = []
    i = 0
    while i < n:
        if not separators[i]:
            j = i
            while j + 1 < n and not separators[j + 1]:
                j += 1
            if j - i + 1 >= 2:
                segments.append(
                    DemonstrationTrace(trace.samples[i : j + 1], trace.meta)
                )
            i = j + 1
        else:
            i += 1
    return segments
