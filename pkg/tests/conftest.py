import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from skillpath.cli import main as cli_main

ARM_MODEL_DOC = {
    "version": 1,
    "name": "generic-6r-nominal",
    "dh": [
        {"a_mm": 150.0, "alpha_deg": -90.0, "d_mm": 450.0, "theta_offset_deg": 0.0},
        {"a_mm": 570.0, "alpha_deg": 0.0, "d_mm": 0.0, "theta_offset_deg": -90.0},
        {"a_mm": 155.0, "alpha_deg": -90.0, "d_mm": 0.0, "theta_offset_deg": 0.0},
        {"a_mm": 0.0, "alpha_deg": 90.0, "d_mm": 640.0, "theta_offset_deg": 0.0},
        {"a_mm": 0.0, "alpha_deg": -90.0, "d_mm": 0.0, "theta_offset_deg": 0.0},
        {"a_mm": 0.0, "alpha_deg": 0.0, "d_mm": 95.0, "theta_offset_deg": 0.0},
    ],
    "joint_limits_deg": [
        [-170, 170], [-90, 150], [-170, 190], [-180, 180], [-135, 135], [-360, 360],
    ],
    "max_joint_speed_deg_s": [140, 160, 170, 340, 340, 520],
    "tool": {"xyz_mm": [0, 0, 80], "fixed_xyz_deg": [0, 0, 0]},
}

# The working cell: robot 420 mm behind / 350 mm beside the fixture origin.
WORKING_CALIBRATION = {
    "version": 1,
    "frames": ["F", "S", "R", "E"],
    "edges": [
        {"from": "E", "to": "R", "xyz_mm": [0, 0, 0], "fixed_xyz_deg": [0, 0, 0]},
        {"from": "R", "to": "F", "xyz_mm": [420, -350, 300], "fixed_xyz_deg": [0, 0, 0]},
        {"from": "F", "to": "S", "xyz_mm": [0, 0, 0], "fixed_xyz_deg": [0, 0, 0]},
    ],
}

# Fixture placed far beyond the arm's envelope: every waypoint unreachable.
OUT_OF_REACH_CALIBRATION = {
    "version": 1,
    "frames": ["F", "S", "R", "E"],
    "edges": [
        {"from": "E", "to": "R", "xyz_mm": [0, 0, 0], "fixed_xyz_deg": [0, 0, 0]},
        {"from": "R", "to": "F", "xyz_mm": [2500, 0, 300], "fixed_xyz_deg": [0, 0, 0]},
        {"from": "F", "to": "S", "xyz_mm": [0, 0, 0], "fixed_xyz_deg": [0, 0, 0]},
    ],
}

# All-identity calibration: robot frame == fixture frame == sensor frame.
# Positions must then survive the pipeline bit-exactly (the contour wraps the
# robot base, so validation raises joint violations; that is expected).
IDENTITY_CALIBRATION = {
    "version": 1,
    "frames": ["F", "S", "R", "E"],
    "edges": [
        {"from": "E", "to": "R", "xyz_mm": [0, 0, 0], "fixed_xyz_deg": [0, 0, 0]},
        {"from": "R", "to": "F", "xyz_mm": [0, 0, 0], "fixed_xyz_deg": [0, 0, 0]},
        {"from": "F", "to": "S", "xyz_mm": [0, 0, 0], "fixed_xyz_deg": [0, 0, 0]},
    ],
}

DEFAULT_VALIDATION = {
    "max_cartesian_speed_mm_s": 300.0,
    "max_orientation_rate_deg_s": 90.0,
    "max_waypoint_gap_mm": 900.0,
    "max_joint_jump_rad": 0.8,
}


def scenario_doc(name, error_model=None, prefix="fix"):
    return {
        "version": 1,
        "scenario": name,
        "error_model": error_model
        or {
            "z_drift_mm_at_max_range": 60.0,
            "drift_growth": "linear",
            "orientation_noise_deg": [1.0, 5.0],
            "xy_jitter_mm": 1.0,
        },
        "outputs": {
            "trace": f"{prefix}_trace.csv",
            "truth": f"{prefix}_truth.csv",
            "nominal_path": f"{prefix}_path.json",
        },
    }


ZERO_NOISE = {
    "z_drift_mm_at_max_range": 0.0,
    "drift_growth": "linear",
    "orientation_noise_deg": [0.0, 0.0],
    "xy_jitter_mm": 0.0,
}


def project_doc(prefix="fix", spacing=100.0, calibration="calibration.json",
                validation=None, emit_name="JOB1"):
    return {
        "version": 1,
        "calibration": calibration,
        "arm_model": "arm.json",
        "nominal_path": f"{prefix}_path.json",
        "trace": f"{prefix}_trace.csv",
        "fusion": {
            "resample_spacing_mm": spacing,
            "weights_xyz": [1.0, 1.0, 0.1],
            "downsample_tol_pos_mm": 0.5,
            "downsample_tol_rot_deg": 1.0,
            "orientation_window_s": 0.2,
            "speed_window_s": 0.2,
            "speed_clamp_mm_s": [1.0, 1000.0],
            "segment_speed_floor_mm_s": 5.0,
            "segment_dwell_s": 0.5,
        },
        "validation": validation or dict(DEFAULT_VALIDATION),
        "emit": {"name": emit_name, "tool": 0},
        "mount_fixed_xyz_deg": [0, 0, 0],
    }


class Cell:
    """A temp directory with scenario/project configs and a CLI runner."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.runner = CliRunner()

    def write(self, name: str, doc: dict) -> Path:
        p = self.root / name
        p.write_text(json.dumps(doc, indent=2), encoding="utf-8")
        return p

    def cli(self, *args):
        return self.runner.invoke(cli_main, [str(a) for a in args])

    def setup(self, scenario="rectangle", error_model=None, prefix="fix",
              spacing=100.0, calibration=None, validation=None, seed=7,
              emit_name="JOB1"):
        self.write("arm.json", ARM_MODEL_DOC)
        self.write("calibration.json", calibration or WORKING_CALIBRATION)
        self.write(f"{prefix}_scenario.json", scenario_doc(scenario, error_model, prefix))
        self.write(
            f"{prefix}_project.json",
            project_doc(prefix, spacing, validation=validation, emit_name=emit_name),
        )
        r = self.cli("synth", "--config", self.root / f"{prefix}_scenario.json", "--seed", seed)
        assert r.exit_code == 0, r.output
        return self

    def fuse(self, prefix="fix", session="session.json"):
        return self.cli(
            "fuse", "--config", self.root / f"{prefix}_project.json",
            "--session", self.root / session,
        )


@pytest.fixture
def cell(tmp_path):
    return Cell(tmp_path)
