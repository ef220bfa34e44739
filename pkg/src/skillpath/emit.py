"""Robot program IR and serializers.

``compile_program`` turns a validated robot-frame fused path into a
backend-neutral list of linear moves (positions in mm, orientations as fixed
x-y-z degrees, per-move speeds). Two serializers exist: a canonical JSON job
for interchange and an INFORM-flavored ``.JBI`` text for MOTOMAN-class
controllers. The JBI output is a deliberately narrow subset (Cartesian MOVL
only, one frame, no pulse records) and is not claimed controller-verified.

Both emitters are byte-deterministic: fixed decimal formatting, sorted keys,
no locale, no wall-clock timestamps unless explicitly injected via options.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, EmitError
from .geometry import fixed_xyz_to_matrix, matrix_to_fixed_xyz
from .pathfusion import FusedPath

PORTABLE_FORMAT = "skillpath-job"
_NAME_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_-]{0,31}$")


@dataclass(frozen=True)
class Move:
    position_mm: tuple[float, float, float]
    fixed_xyz_deg: tuple[float, float, float]
    speed_mm_s: float


@dataclass(frozen=True)
class RobotProgram:
    name: str
    frame: str
    moves: tuple[Move, ...]
    tool: int = 0
    source_digest: str = ""
    forced: bool = False

    def __post_init__(self):
        if len(self.moves) < 1:
            raise ContractError("a program needs at least one move")
        if self.frame != "R":
            raise ContractError(f"programs must be in frame 'R', got {self.frame!r}")


def path_digest(path: FusedPath) -> str:
    """Stable digest of the waypoint data feeding a program."""
    h = hashlib.sha256()
    for arr in (path.positions, path.rotations, path.speeds, path.s_mm):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    h.update(path.frame.encode())
    return h.hexdigest()


def compile_program(
    path: FusedPath, *, name: str, tool: int = 0, forced: bool = False
) -> RobotProgram:
    """One linear move per waypoint; orientations emitted as fixed x-y-z degrees."""
    if path.frame != "R":
        raise ContractError(f"compile expects a robot-frame path, got {path.frame!r}")
    moves = []
    for k in range(len(path)):
        f = matrix_to_fixed_xyz(path.rotations[k])
        moves.append(
            Move(
                tuple(float(v) for v in path.positions[k]),
                tuple(math.degrees(a) for a in f),
                float(path.speeds[k]),
            )
        )
    return RobotProgram(
        name=name,
        frame=path.frame,
        moves=tuple(moves),
        tool=tool,
        source_digest=path_digest(path),
        forced=forced,
    )


def _fmt(value: float, decimals: int) -> str:
    s = f"{value:.{decimals}f}"
    if s == f"-{0:.{decimals}f}":
        s = s[1:]
    return s


def _fmt_speed(value: float) -> str:
    return _fmt(value, 1)


def emit_portable(program: RobotProgram) -> bytes:
    """Canonical JSON job: sorted keys, LF, 3 decimals mm / 4 deg / 1 mm/s."""
    lines = ["{"]
    lines.append(f'  "forced": {"true" if program.forced else "false"},')
    lines.append(f'  "format": "{PORTABLE_FORMAT}",')
    lines.append(f'  "frame": {json.dumps(program.frame)},')
    lines.append('  "moves": [')
    for i, mv in enumerate(program.moves):
        xyz = ", ".join(_fmt(v, 3) for v in mv.position_mm)
        ang = ", ".join(_fmt(v, 4) for v in mv.fixed_xyz_deg)
        comma = "," if i < len(program.moves) - 1 else ""
        lines.append("    {")
        lines.append(f'      "fixed_xyz_deg": [{ang}],')
        lines.append('      "kind": "linear",')
        lines.append(f'      "speed_mm_s": {_fmt_speed(mv.speed_mm_s)},')
        lines.append(f'      "xyz_mm": [{xyz}]')
        lines.append(f"    }}{comma}")
    lines.append("  ],")
    lines.append(f'  "name": {json.dumps(program.name)},')
    lines.append(f'  "source_digest": {json.dumps(program.source_digest)},')
    lines.append(f'  "tool": {program.tool},')
    lines.append('  "version": 1')
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_portable(data: bytes | str) -> RobotProgram:
    """Parse the portable job format back into the IR."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EmitError(f"invalid portable job JSON: {exc}") from exc
    if doc.get("format") != PORTABLE_FORMAT or doc.get("version") != 1:
        raise EmitError("not a skillpath-job/1 document")
    moves = tuple(
        Move(tuple(mv["xyz_mm"]), tuple(mv["fixed_xyz_deg"]), float(mv["speed_mm_s"]))
        for mv in doc["moves"]
    )
    return RobotProgram(
        name=doc["name"],
        frame=doc["frame"],
        moves=moves,
        tool=int(doc["tool"]),
        source_digest=doc["source_digest"],
        forced=bool(doc["forced"]),
    )


@dataclass(frozen=True)
class InformOptions:
    """Dialect knobs for the INFORM-flavored emitter."""

    tool: int | None = None  # defaults to the program's tool id
    group: str = "RB1"
    comment_prefix: str = "SKILLPATH"
    date: str | None = None  # injects a ///DATE line when set; omitted otherwise
    max_positions: int = 10000
    max_speed_units: int = 15000  # V field budget, 0.1 mm/s units


def emit_inform(program: RobotProgram, opts: InformOptions = InformOptions()) -> bytes:
    """INFORM-flavored .JBI text: CRLF, one MOVL per move, V in 0.1 mm/s."""
    if not _NAME_RE.match(program.name or ""):
        raise EmitError(
            f"job name {program.name!r} is not valid for the dialect "
            "(1-32 chars, alphanumeric/underscore/dash, cannot start with a dash)"
        )
    n = len(program.moves)
    if n > opts.max_positions:
        raise EmitError(f"{n} moves exceed the dialect position budget ({opts.max_positions})")
    tool = program.tool if opts.tool is None else opts.tool

    speeds = []
    for i, mv in enumerate(program.moves):
        v_units = int(round(mv.speed_mm_s * 10.0))
        if v_units < 1:
            raise EmitError(f"move {i}: speed {mv.speed_mm_s} mm/s is below the dialect minimum")
        if v_units > opts.max_speed_units:
            raise EmitError(
                f"move {i}: speed {mv.speed_mm_s} mm/s overflows the dialect V field "
                f"(max {opts.max_speed_units / 10.0} mm/s)"
            )
        speeds.append(v_units)

    lines = ["/JOB", f"//NAME {program.name}", "//POS", f"///NPOS {n},0,0,0,0,0"]
    lines.append(f"///TOOL {tool}")
    lines.append("///POSTYPE BASE")
    lines.append("///RECTAN")
    lines.append("///RCONF 0,0,0,0,0,0,0,0")
    for i, mv in enumerate(program.moves):
        xyz = ",".join(_fmt(v, 3) for v in mv.position_mm)
        ang = ",".join(_fmt(v, 4) for v in mv.fixed_xyz_deg)
        lines.append(f"C{i:05d}={xyz},{ang}")
    lines.append("//INST")
    if opts.date is not None:
        lines.append(f"///DATE {opts.date}")
    comment = f"{opts.comment_prefix} {program.source_digest[:8]}"
    if program.forced:
        comment += " FORCED"
    lines.append(f"///COMM {comment[:28]}")
    lines.append("///ATTR SC,RW")
    lines.append(f"///GROUP1 {opts.group}")
    lines.append("NOP")
    for i, v_units in enumerate(speeds):
        lines.append(f"MOVL C{i:05d} V={v_units}")
    lines.append("END")
    return ("\r\n".join(lines) + "\r\n").encode("utf-8")


BACKENDS = ("portable", "inform")


def emit_program(program: RobotProgram, backend: str, opts: InformOptions | None = None) -> bytes:
    if backend == "portable":
        return emit_portable(program)
    if backend == "inform":
        return emit_inform(program, opts or InformOptions())
    raise EmitError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def reconstruct_rotations(program: RobotProgram) -> np.ndarray:
    """Rotation matrices from the emitted angles (for round-trip checks)."""
    return np.array(
        [fixed_xyz_to_matrix(np.deg2rad(mv.fixed_xyz_deg)) for mv in program.moves]
    )
