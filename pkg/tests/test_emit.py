import math
from pathlib import Path

import numpy as np
import pytest

from skillpath.emit import (
    InformOptions,
    Move,
    RobotProgram,
    compile_program,
    emit_inform,
    emit_portable,
    emit_program,
    parse_portable,
    reconstruct_rotations,
)
from skillpath.errors import ContractError, EmitError
from skillpath.geometry import euler_zyx_to_matrix, geodesic_angle
from skillpath.pathfusion import FusedPath

GOLDEN = Path(__file__).parent / "golden"


def fixture_programs():
    a = RobotProgram(
        "GLASS1", "R", (Move((500.0, 0.0, 300.0), (0.0, 0.0, 0.0), 100.0),),
        tool=0, source_digest="aa01" * 16,
    )
    b = RobotProgram(
        "GLASS2", "R",
        (
            Move((500.0, 0.0, 300.0), (0.0, 0.0, 0.0), 100.0),
            Move((600.0, 50.0, 300.0), (0.0, 0.0, 90.0), 80.0),
        ),
        tool=1, source_digest="bb02" * 16,
    )
    c = RobotProgram(
        "EDGE_CASE-3", "R",
        (
            Move((-120.5, 33.3333, 404.04), (179.9999, -45.5, 0.125), 33.3),
            Move((0.0, -0.0004, 250.0), (0.0, 90.0, 0.0), 55.5),
            Move((800.0005, 10.0, 10.0), (-0.00004, 0.0, -179.9999), 120.0),
        ),
        tool=2, source_digest="cc03" * 16, forced=True,
    )
    return {"a": a, "b": b, "c": c}


def make_robot_path(rng, n=6):
    positions = np.cumsum(rng.uniform(5, 40, (n, 3)), axis=0) + [600, -200, 300]
    rotations = np.array(
        [euler_zyx_to_matrix(rng.uniform(-math.pi / 3, math.pi / 3, 3)) for _ in range(n)]
    )
    seg = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return FusedPath(positions, rotations, rng.uniform(20, 200, n), s, "R")


class TestCompile:
    def test_identity_orientation_gives_zero_angles(self):
        path = FusedPath(
            np.array([[500.0, 0.0, 300.0]]), np.array([np.eye(3)]),
            np.array([100.0]), np.array([0.0]), "R",
        )
        prog = compile_program(path, name="J1")
        assert prog.moves[0].fixed_xyz_deg == (0.0, 0.0, 0.0)

    def test_pure_z_rotation_90(self):
        path = FusedPath(
            np.array([[500.0, 0.0, 300.0]]),
            np.array([euler_zyx_to_matrix((math.pi / 2, 0, 0))]),
            np.array([100.0]), np.array([0.0]), "R",
        )
        prog = compile_program(path, name="J1")
        phi, theta, psi = prog.moves[0].fixed_xyz_deg
        assert phi == pytest.approx(0.0, abs=1e-9)
        assert theta == pytest.approx(0.0, abs=1e-9)
        assert psi == pytest.approx(90.0, abs=1e-9)

    def test_round_trip_preserves_geometry(self):
        rng = np.random.default_rng(127)
        path = make_robot_path(rng)
        prog = compile_program(path, name="J1")
        recon = reconstruct_rotations(prog)
        for r0, r1 in zip(path.rotations, recon):
            assert np.max(np.abs(r0 - r1)) < 1e-9
        np.testing.assert_array_equal(
            np.array([m.position_mm for m in prog.moves]), path.positions
        )

    def test_wrong_frame_rejected(self):
        path = FusedPath(
            np.array([[0.0, 0, 0]]), np.array([np.eye(3)]), np.array([10.0]),
            np.array([0.0]), "F",
        )
        with pytest.raises(ContractError):
            compile_program(path, name="J1")


class TestPortable:
    @pytest.mark.parametrize("tag", ["a", "b", "c"])
    def test_golden_bytes(self, tag):
        prog = fixture_programs()[tag]
        assert emit_portable(prog) == (GOLDEN / f"job_{tag}.json").read_bytes()

    def test_deterministic(self):
        prog = fixture_programs()["b"]
        assert emit_portable(prog) == emit_portable(prog)

    @pytest.mark.parametrize("tag", ["a", "b", "c"])
    def test_round_trip_lossless_at_precision(self, tag):
        prog = fixture_programs()[tag]
        data = emit_portable(prog)
        again = parse_portable(data)
        assert emit_portable(again) == data
        assert again.name == prog.name
        assert again.tool == prog.tool
        assert again.forced == prog.forced
        assert again.source_digest == prog.source_digest

    def test_parse_rejects_other_documents(self):
        with pytest.raises(EmitError):
            parse_portable(b'{"format": "something-else", "version": 1}')


class TestInform:
    @pytest.mark.parametrize("tag", ["a", "b", "c"])
    def test_golden_bytes(self, tag):
        prog = fixture_programs()[tag]
        assert emit_inform(prog) == (GOLDEN / f"job_{tag}.jbi").read_bytes()

    def test_crlf_endings(self):
        data = emit_inform(fixture_programs()["a"])
        text = data.decode()
        assert text.endswith("END\r\n")
        assert "\n" not in text.replace("\r\n", "")

    def test_empty_name_rejected(self):
        prog = fixture_programs()["a"]
        with pytest.raises(ContractError):
            RobotProgram("", "R", (), tool=0)
        bad = RobotProgram("x y", "R", prog.moves, tool=0)
        with pytest.raises(EmitError, match="job name"):
            emit_inform(bad)

    def test_speed_unit_conversion(self):
        data = emit_inform(fixture_programs()["a"]).decode()
        assert "MOVL C00000 V=1000" in data  # 100 mm/s in 0.1 mm/s units

    def test_speed_overflow_names_move(self):
        prog = RobotProgram(
            "J1", "R",
            (
                Move((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 100.0),
                Move((1.0, 0.0, 0.0), (0.0, 0.0, 0.0), 5000.0),
            ),
            source_digest="x" * 64,
        )
        with pytest.raises(EmitError, match="move 1"):
            emit_inform(prog, InformOptions(max_speed_units=15000))

    def test_position_budget(self):
        moves = tuple(
            Move((float(i), 0.0, 0.0), (0.0, 0.0, 0.0), 50.0) for i in range(4)
        )
        prog = RobotProgram("J1", "R", moves, source_digest="x" * 64)
        with pytest.raises(EmitError, match="budget"):
            emit_inform(prog, InformOptions(max_positions=3))

    def test_date_option_injects_line(self):
        data = emit_inform(
            fixture_programs()["a"], InformOptions(date="2022/04/25 14:11")
        ).decode()
        assert "///DATE 2022/04/25 14:11\r\n" in data

    def test_forced_marker_in_comment(self):
        data = emit_inform(fixture_programs()["c"]).decode()
        assert "FORCED" in data


class TestEmitProgram:
    def test_dispatch(self):
        prog = fixture_programs()["a"]
        assert emit_program(prog, "portable") == emit_portable(prog)
        assert emit_program(prog, "inform") == emit_inform(prog)
        with pytest.raises(EmitError):
            emit_program(prog, "krl")
