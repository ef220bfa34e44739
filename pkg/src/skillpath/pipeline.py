"""Batch pipeline: synth, fuse, validate, emit.

These are the library entry points behind the CLI. Every stage failure is
wrapped in a StageError naming the stage so operators see where the pipeline
broke; exit-code policy lives in the CLI (0 pass, 2 gate failures, 1 hard
errors).
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import capture, emit as emit_mod, frames, kinematics, pathfusion
from .capture import DemonstrationSample, DemonstrationTrace
from .config import ProjectConfig, ScenarioConfig
from .errors import ConfigError, DegenerateInputError, SkillPathError, StageError
from .geometry import RigidTransform, fixed_xyz_to_matrix
from .scenarios import PROFILES, Scenario, get_scenario
from .session import SessionState, save_session

DEFAULT_PROFILE = "gentle_wobble"
DEFAULT_SPEED_MM_S = 100.0
DEFAULT_RATE_HZ = 60.0


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except SkillPathError as exc:
        raise StageError(name, exc) from exc


def run_synth(config: ScenarioConfig, seed: int) -> dict[str, Path]:
    """Synthesize a demonstration for a scenario; writes trace, ground truth
    and the nominal path document. Deterministic for a fixed seed."""
    with _stage("scenario"):
        if config.scenario == "custom":
            path = pathfusion.parse_nominal_path(
                config.nominal_path_in.read_text(encoding="utf-8")
            )
            scenario = Scenario(
                name="custom",
                path=path,
                speed_mm_s=DEFAULT_SPEED_MM_S,
                sample_rate_hz=DEFAULT_RATE_HZ,
                receptor_mm=(0.0, 0.0, 0.0),
                profile=DEFAULT_PROFILE,
            )
        else:
            scenario = get_scenario(config.scenario)
        speed = config.speed_mm_s if config.speed_mm_s is not None else scenario.speed_mm_s
        rate = config.sample_rate_hz if config.sample_rate_hz is not None else scenario.sample_rate_hz
        receptor = config.receptor_mm if config.receptor_mm is not None else scenario.receptor_mm
        profile = config.profile if config.profile is not None else scenario.profile

    with _stage("synthesize"):
        trace, truth = capture.synthesize_trace(
            scenario.path,
            speed,
            config.error_model,
            seed,
            sample_rate_hz=rate,
            receptor_mm=receptor,
            orientation_profile=PROFILES[profile],
            source_id=f"{scenario.name}:{seed}",
        )

    with _stage("write-outputs"):
        outs = config.outputs
        for p in (outs.trace, outs.truth, outs.nominal_path):
            p.parent.mkdir(parents=True, exist_ok=True)
        outs.trace.write_text(capture.serialize_trace(trace), encoding="utf-8")
        outs.truth.write_text(capture.serialize_trace(truth.trace), encoding="utf-8")
        outs.nominal_path.write_text(
            pathfusion.nominal_path_to_json(scenario.path), encoding="utf-8"
        )
    return {"trace": outs.trace, "truth": outs.truth, "nominal_path": outs.nominal_path}


def _map_trace_positions(
    trace: DemonstrationTrace, transform: RigidTransform
) -> DemonstrationTrace:
    """Re-express trace positions in another frame (orientations untouched)."""
    mapped = transform.apply(trace.positions)
    samples = tuple(
        replace(s, position=mapped[i]) for i, s in enumerate(trace.samples)
    )
    return DemonstrationTrace(samples, trace.meta)


def run_fuse(config: ProjectConfig) -> SessionState:
    """parse -> segment -> correspond -> fuse -> downsample -> robot frame ->
    validate; returns the initial session (not yet persisted)."""
    fp = config.fusion
    with _stage("calibration"):
        graph = frames.load_calibration(config.calibration_path.read_text(encoding="utf-8"))
    with _stage("arm-model"):
        model = kinematics.load_arm_model(config.arm_model_path.read_text(encoding="utf-8"))
    with _stage("nominal-path"):
        nominal = pathfusion.parse_nominal_path(
            config.nominal_path_path.read_text(encoding="utf-8")
        )
    with _stage("trace"):
        trace = capture.parse_trace(
            config.trace_path.read_text(encoding="utf-8"), source_id=str(config.trace_path)
        )
    with _stage("transform-trace"):
        # Tracker positions live in the sensor frame; matching happens in the
        # path's frame.
        to_path_frame = graph.resolve(nominal.frame, "S")
        trace = _map_trace_positions(trace, to_path_frame)
    with _stage("segment"):
        segments = capture.segment_trace(
            trace, fp.segment_speed_floor_mm_s, fp.segment_dwell_s
        )
        if not segments:
            raise DegenerateInputError(
                "no active segment found (is the whole demonstration below the speed floor?)"
            )
        # The working pass is the longest active segment.
        working = max(segments, key=lambda seg: seg.duration)
    with _stage("anchor"):
        anchored = pathfusion.anchor_closed_path(
            nominal, working.samples[0].position, fp.weights_xyz
        )
    with _stage("resample"):
        resampled = pathfusion.resample(anchored, fp.resample_spacing_mm)
    with _stage("correspond"):
        corr = pathfusion.correspond(resampled, working, fp.weights_xyz)
    with _stage("fuse"):
        fused = pathfusion.fuse(
            resampled,
            working,
            corr,
            orientation_window_s=fp.orientation_window_s,
            speed_window_s=fp.speed_window_s,
            speed_clamp_mm_s=fp.speed_clamp_mm_s,
        )
    with _stage("downsample"):
        fused = pathfusion.downsample(fused, fp.downsample_tol_pos_mm, fp.downsample_tol_rot_deg)
    with _stage("to-robot-frame"):
        mount = RigidTransform(
            fixed_xyz_to_matrix(np.deg2rad(config.mount_fixed_xyz_deg)), np.zeros(3)
        )
        robot_path = pathfusion.to_robot_frame(fused, graph, mount=mount)
    with _stage("validate"):
        report = kinematics.validate(model, robot_path, config.validation)
    return SessionState(
        fused=robot_path,
        base=robot_path,
        report=report,
        edits=(),
        approved=False,
        revision=0,
        config=config.snapshot(),
    )


def fuse_to_file(config: ProjectConfig, session_path: str | Path) -> SessionState:
    state = run_fuse(config)
    with _stage("write-session"):
        save_session(state, session_path)
    return state


def revalidate(state: SessionState) -> SessionState:
    """Re-run validation for the session's current (possibly edited) path."""
    cfg = state.project_config()
    with _stage("arm-model"):
        model = kinematics.load_arm_model(cfg.arm_model_path.read_text(encoding="utf-8"))
    with _stage("validate"):
        report = kinematics.validate(model, state.fused, cfg.validation)
    return replace(state, report=report)


def compile_session(state: SessionState, *, forced: bool = False) -> emit_mod.RobotProgram:
    cfg = state.project_config()
    return emit_mod.compile_program(
        state.fused, name=cfg.emit.name, tool=cfg.emit.tool, forced=forced
    )


def run_emit(state: SessionState, backend: str, *, force: bool = False) -> bytes:
    """Serialize the session's program; refuses unapproved or failing sessions
    unless forced (the force mark is embedded in the program header)."""
    if not force:
        if not state.report.passed:
            raise ConfigError(
                "session has validation violations; fix them or use --force"
            )
        if not state.approved:
            raise ConfigError(
                "session is not approved; review and approve it (or use --force)"
            )
    program = compile_session(state, forced=force)
    return emit_mod.emit_program(program, backend)
