import itertools
import json
import math

import numpy as np
import pytest

from skillpath.capture import TrackerErrorModel, synthesize_trace
from skillpath.errors import ContractError, DegenerateInputError, PathParseError
from skillpath.frames import FrameGraph
from skillpath.geometry import (
    RigidTransform,
    axis_angle_matrix,
    euler_zyx_to_matrix,
    geodesic_angle,
)
from skillpath.pathfusion import (
    FusedPath,
    NominalPath,
    anchor_closed_path,
    arc_length_table,
    correspond,
    downsample,
    evaluate_at,
    fuse,
    monotone_assign,
    nominal_path_to_json,
    parse_nominal_path,
    resample,
    to_robot_frame,
)

from test_geometry import random_transform


def square_path(side=1000.0, closed=True):
    pts = np.array(
        [[0.0, 0.0, 0.0], [side, 0.0, 0.0], [side, side, 0.0], [0.0, side, 0.0]]
    )
    return NominalPath(pts, closed)


def gentle_profile(s, total):
    # Slow, smooth orientation swing; periodic over a closed contour.
    w = 2 * math.pi * s / total
    return euler_zyx_to_matrix(
        (0.3 * math.sin(w), 0.15 * math.sin(2 * w + 1.0), 0.1 * math.cos(w))
    )


class TestParseNominalPath:
    def test_square_perimeter(self):
        doc = {
            "version": 1,
            "units": "mm",
            "closed": True,
            "frame": "F",
            "points": [[0, 0, 0], [1000, 0, 0], [1000, 1000, 0], [0, 1000, 0]],
        }
        path = parse_nominal_path(json.dumps(doc))
        assert path.total_length == pytest.approx(4000.0)

    def test_two_identical_points_rejected(self):
        doc = {"version": 1, "units": "mm", "closed": False, "points": [[1, 2, 3], [1, 2, 3]]}
        with pytest.raises(PathParseError, match="distinct"):
            parse_nominal_path(json.dumps(doc))

    def test_three_point_polyline_length(self):
        # Leg 3 then hypotenuse 5 of a 3-4-5 triangle: total 8.
        doc = {"version": 1, "units": "mm", "closed": False, "points": [[0, 0, 0], [3, 0, 0], [0, 4, 0]]}
        assert parse_nominal_path(json.dumps(doc)).total_length == pytest.approx(8.0)

    def test_meters_converted(self):
        doc = {"version": 1, "units": "m", "closed": False, "points": [[0, 0, 0], [1, 0, 0]]}
        assert parse_nominal_path(json.dumps(doc)).total_length == pytest.approx(1000.0)

    def test_unknown_unit_rejected(self):
        doc = {"version": 1, "units": "in", "closed": False, "points": [[0, 0, 0], [1, 0, 0]]}
        with pytest.raises(PathParseError, match="unit"):
            parse_nominal_path(json.dumps(doc))

    def test_unknown_key_rejected(self):
        doc = {"version": 1, "units": "mm", "closed": False, "points": [[0, 0, 0], [1, 0, 0]], "x": 1}
        with pytest.raises(PathParseError, match="unknown keys"):
            parse_nominal_path(json.dumps(doc))

    def test_consecutive_duplicates_merged(self):
        doc = {
            "version": 1,
            "units": "mm",
            "closed": False,
            "points": [[0, 0, 0], [0, 0, 0], [5, 0, 0], [5, 0, 0], [5, 5, 0]],
        }
        assert len(parse_nominal_path(json.dumps(doc)).points) == 3

    def test_round_trip_through_writer(self):
        path = square_path()
        again = parse_nominal_path(nominal_path_to_json(path))
        np.testing.assert_array_equal(again.points, path.points)
        assert again.closed == path.closed


class TestEvaluateAndArcTable:
    def test_closed_table_appends_closing_segment(self):
        table = arc_length_table(square_path())
        np.testing.assert_allclose(table, [0, 1000, 2000, 3000, 4000])

    def test_vertex_arc_lengths_return_vertices_exactly(self):
        path = square_path()
        table = arc_length_table(path)
        for i, s in enumerate(table[:-1]):
            np.testing.assert_array_equal(evaluate_at(path, float(s)), path.points[i])

    def test_interior_point(self):
        path = square_path()
        np.testing.assert_allclose(evaluate_at(path, 1500.0), [1000.0, 500.0, 0.0])

    def test_clamping(self):
        path = square_path(closed=False)
        np.testing.assert_array_equal(evaluate_at(path, -5.0), path.points[0])
        np.testing.assert_array_equal(evaluate_at(path, 1e9), path.points[-1])


class TestResample:
    def test_square_500_spacing(self):
        rs = resample(square_path(), 500.0)
        assert len(rs.points) == 8
        # Corners survive bit-exactly.
        for corner in square_path().points:
            assert any(np.array_equal(p, corner) for p in rs.points)

    def test_straight_segment(self):
        path = NominalPath(np.array([[0.0, 0, 0], [100.0, 0, 0]]), False)
        rs = resample(path, 25.0)
        np.testing.assert_allclose(rs.points[:, 0], [0, 25, 50, 75, 100])

    def test_spacing_larger_than_path_rejected(self):
        path = NominalPath(np.array([[0.0, 0, 0], [10.0, 0, 0]]), False)
        with pytest.raises(DegenerateInputError):
            resample(path, 11.0)

    def test_uniform_gaps_on_smooth_path(self):
        # A smooth arc has no corners above the snap threshold, so the
        # resampled points sit at exactly uniform arc lengths. Oracle:
        # project each output point back onto the original polyline and
        # recompute its arc length from scratch.
        theta = np.linspace(0, math.pi, 5000)
        pts = np.stack([300 * np.cos(theta), 300 * np.sin(theta), np.zeros_like(theta)], axis=1)
        path = NominalPath(pts, False)
        rs = resample(path, 20.0)

        table = arc_length_table(path)
        def recovered_s(q):
            best = (math.inf, 0.0)
            for i in range(len(pts) - 1):
                a, b = pts[i], pts[i + 1]
                d = b - a
                u = float(np.dot(q - a, d) / np.dot(d, d))
                u = min(1.0, max(0.0, u))
                dist = float(np.linalg.norm(q - (a + u * d)))
                if dist < best[0]:
                    best = (dist, float(table[i] + u * (table[i + 1] - table[i])))
            return best[1]

        s_values = np.array([recovered_s(q) for q in rs.points])
        gaps = np.diff(s_values)
        assert np.max(np.abs(gaps - gaps[0])) < 1e-9

    def test_corner_snap_with_offgrid_corners(self):
        # Corner at s=130 with spacing 50: sample at s=150 snaps to the corner.
        pts = np.array([[0.0, 0, 0], [130.0, 0, 0], [130.0, 170.0, 0]])
        path = NominalPath(pts, False)
        rs = resample(path, 50.0)
        assert any(np.array_equal(p, pts[1]) for p in rs.points)


class TestMonotoneAssign:
    @staticmethod
    def brute_force(cost):
        m, k = cost.shape
        best_cost = math.inf
        best = None
        for combo in itertools.combinations_with_replacement(range(k), m):
            c = sum(cost[i, combo[i]] for i in range(m))
            if c < best_cost:
                best_cost = c
                best = combo
        return np.array(best), best_cost

    def test_matches_brute_force_exhaustive_sizes(self):
        rng = np.random.default_rng(71)
        for m in range(1, 9):
            for k in range(1, 13):
                for _ in range(2):
                    cost = rng.uniform(0, 10, (m, k))
                    got = monotone_assign(cost)
                    want, want_cost = self.brute_force(cost)
                    np.testing.assert_array_equal(got, want)
                    got_cost = sum(cost[i, got[i]] for i in range(m))
                    assert got_cost == pytest.approx(want_cost, abs=1e-12)

    def test_all_zero_costs_lex_smallest(self):
        cost = np.zeros((4, 5))
        np.testing.assert_array_equal(monotone_assign(cost), [0, 0, 0, 0])

    def test_single_column(self):
        cost = np.array([[1.0], [2.0], [3.0]])
        np.testing.assert_array_equal(monotone_assign(cost), [0, 0, 0])


class TestCorrespond:
    def test_zero_noise_recovers_schedule(self):
        path = resample(square_path(), 50.0)
        trace, truth = synthesize_trace(
            path, 100.0, TrackerErrorModel.noiseless(), seed=1, orientation_profile=gentle_profile
        )
        corr = correspond(path, trace, (1.0, 1.0, 0.1))
        # Refined assignment lands within one grid step of ground truth.
        assert np.max(np.abs(corr.s_mm - truth.s_mm)) < 50.0
        # And with refinement, far tighter away from the closure wrap.
        interior = truth.s_mm < truth.s_mm[-1] - 50.0
        assert np.max(np.abs(corr.s_mm[interior] - truth.s_mm[interior])) < 1.0

    def test_z_drift_downweighted(self):
        path = resample(square_path(), 50.0)
        model = TrackerErrorModel(60.0, "linear", (0.0, 0.0), 0.0)
        trace, truth = synthesize_trace(
            path, 100.0, model, seed=2, receptor_mm=(-200.0, -200.0, 300.0)
        )
        corr = correspond(path, trace, (1.0, 1.0, 0.1))
        interior = (truth.s_mm > 100.0) & (truth.s_mm < truth.s_mm[-1] - 100.0)
        assert np.max(np.abs(corr.s_mm[interior] - truth.s_mm[interior])) < 100.0

    def test_monotone_output(self):
        path = resample(square_path(), 100.0)
        trace, _ = synthesize_trace(path, 120.0, TrackerErrorModel(), seed=3)
        corr = correspond(path, trace)
        assert np.all(np.diff(corr.s_mm) >= 0)

    def test_weights_all_zero_rejected(self):
        path = square_path()
        trace, _ = synthesize_trace(path, 100.0, TrackerErrorModel.noiseless(), seed=4)
        with pytest.raises(DegenerateInputError):
            correspond(path, trace, (0.0, 0.0, 0.0))


class TestFuse:
    def build_corresponded(self, spacing=50.0, noise=None, seed=1, speed=100.0):
        path = resample(square_path(), spacing)
        model = noise if noise is not None else TrackerErrorModel.noiseless()
        trace, truth = synthesize_trace(
            path, speed, model, seed=seed, orientation_profile=gentle_profile
        )
        corr = correspond(path, trace, (1.0, 1.0, 0.1))
        return path, trace, truth, corr

    def test_constant_orientation_passthrough(self):
        path = resample(square_path(), 100.0)
        q = euler_zyx_to_matrix((0.4, -0.1, 0.2))
        trace, _ = synthesize_trace(
            path, 100.0, TrackerErrorModel.noiseless(), seed=5,
            orientation_profile=lambda s, total: q,
        )
        corr = correspond(path, trace, (1.0, 1.0, 0.1))
        fused = fuse(path, trace, corr)
        for r in fused.rotations:
            assert geodesic_angle(r, q) < 1e-9

    def test_positions_are_verbatim_path_vertices(self):
        path, trace, _, corr = self.build_corresponded()
        fused = fuse(path, trace, corr)
        np.testing.assert_array_equal(fused.positions, path.points)
        np.testing.assert_array_equal(fused.s_mm, arc_length_table(path)[: len(path.points)])

    def test_uniform_speed_recovered(self):
        path, trace, truth, corr = self.build_corresponded(speed=100.0)
        fused = fuse(path, trace, corr)
        interior = (fused.s_mm > 150.0) & (fused.s_mm < fused.s_mm[-1] - 150.0)
        assert np.allclose(fused.speeds[interior], 100.0, rtol=0.02)

    def test_zero_noise_orientation_fidelity(self):
        path, trace, truth, corr = self.build_corresponded()
        fused = fuse(path, trace, corr)
        total = arc_length_table(path)[-1]
        errs = [
            math.degrees(geodesic_angle(r, gentle_profile(s, total)))
            for r, s in zip(fused.rotations, fused.s_mm)
        ]
        assert float(np.sqrt(np.mean(np.square(errs)))) < 0.1

    def test_noisy_orientation_smoothed(self):
        model = TrackerErrorModel(0.0, "linear", (1.0, 5.0), 0.0)
        path, trace, truth, corr = self.build_corresponded(noise=model, seed=9)
        fused = fuse(path, trace, corr)
        total = arc_length_table(path)[-1]
        errs = [
            math.degrees(geodesic_angle(r, gentle_profile(s, total)))
            for r, s in zip(fused.rotations, fused.s_mm)
        ]
        rms = float(np.sqrt(np.mean(np.square(errs))))
        assert rms < 2.5

    def test_speed_arithmetic_from_schedule(self):
        # Samples progressing 10 mm per 0.1 s -> 100 mm/s at interior points.
        path = NominalPath(np.array([[0.0, 0, 0], [500.0, 0, 0]]), False)
        trace, _ = synthesize_trace(
            path, 100.0, TrackerErrorModel.noiseless(), seed=6, sample_rate_hz=10.0
        )
        rs = resample(path, 50.0)
        corr = correspond(rs, trace, (1.0, 1.0, 0.1))
        fused = fuse(rs, trace, corr)
        interior = (fused.s_mm > 60) & (fused.s_mm < 440)
        assert np.allclose(fused.speeds[interior], 100.0, rtol=0.02)

    def test_length_mismatch_rejected(self):
        path, trace, _, corr = self.build_corresponded()
        bad = type(corr)(corr.s_mm[:-1], corr.grid_mm, corr.grid_indices[:-1])
        with pytest.raises(ContractError):
            fuse(path, trace, bad)


def make_fused(positions, rotations=None, speeds=None, s=None, frame="F"):
    n = len(positions)
    if rotations is None:
        rotations = np.tile(np.eye(3), (n, 1, 1))
    if speeds is None:
        speeds = np.full(n, 100.0)
    if s is None:
        positions = np.asarray(positions, dtype=float)
        seg = np.linalg.norm(np.diff(positions, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
    return FusedPath(positions, rotations, speeds, s, frame)


class TestDownsample:
    def test_collinear_constant_orientation_collapses(self):
        pts = np.stack([np.linspace(0, 990, 100), np.zeros(100), np.zeros(100)], axis=1)
        fused = make_fused(pts)
        out = downsample(fused, 0.5, 1.0)
        assert len(out) == 2
        np.testing.assert_array_equal(out.positions[0], pts[0])
        np.testing.assert_array_equal(out.positions[-1], pts[-1])

    def test_square_corners_retained(self):
        path = resample(square_path(), 100.0)
        fused = make_fused(path.points)
        out = downsample(fused, 0.5, 1.0)
        for corner in square_path().points:
            assert any(np.array_equal(p, corner) for p in out.positions)

    def test_orientation_change_retains_waypoints(self):
        pts = np.stack([np.linspace(0, 100, 11), np.zeros(11), np.zeros(11)], axis=1)
        rotations = np.array(
            [axis_angle_matrix(np.array([0.0, 0, 1]), math.radians(a)) for a in
             [0, 1, 2, 3, 4, 45, 86, 87, 88, 89, 90]]
        )
        fused = make_fused(pts, rotations=rotations)
        out = downsample(fused, 0.5, 1.0)
        # The kink in orientation at the middle keeps interior points.
        assert len(out) > 2

    def test_reconstruction_error_bounded(self):
        rng = np.random.default_rng(83)
        n = 120
        s = np.cumsum(rng.uniform(5, 15, n))
        pts = np.stack([s, 40 * np.sin(s / 150), 10 * np.cos(s / 300), ], axis=1)
        rotations = np.array(
            [axis_angle_matrix(np.array([0.3, 1.0, 0.1]), 0.004 * si) for si in s]
        )
        fused = FusedPath(pts, rotations, np.full(n, 80.0), s, "F")
        tol_pos, tol_rot = 1.0, 2.0
        out = downsample(fused, tol_pos, tol_rot)
        kept = {tuple(p) for p in out.positions}
        # Oracle: re-check every dropped waypoint against the kept neighbors.
        kept_idx = [i for i in range(n) if tuple(pts[i]) in kept]
        for a, b in zip(kept_idx, kept_idx[1:]):
            for j in range(a + 1, b):
                u = (s[j] - s[a]) / (s[b] - s[a])
                p_hat = pts[a] + u * (pts[b] - pts[a])
                from skillpath.geometry import slerp

                r_hat = slerp(rotations[a], rotations[b], float(u))
                assert np.linalg.norm(pts[j] - p_hat) < tol_pos
                assert math.degrees(geodesic_angle(rotations[j], r_hat)) < tol_rot

    def test_idempotent(self):
        rng = np.random.default_rng(89)
        n = 80
        s = np.cumsum(rng.uniform(5, 15, n))
        pts = np.stack([s, 30 * np.sin(s / 100), np.zeros(n)], axis=1)
        fused = FusedPath(pts, np.tile(np.eye(3), (n, 1, 1)), np.full(n, 50.0), s, "F")
        once = downsample(fused, 0.5, 1.0)
        twice = downsample(once, 0.5, 1.0)
        assert len(once) == len(twice)
        np.testing.assert_array_equal(once.positions, twice.positions)


class TestAnchorClosedPath:
    def test_open_path_unchanged(self):
        path = square_path(closed=False)
        assert anchor_closed_path(path, [500.0, 10.0, 0.0]) is path

    def test_anchor_at_existing_start_unchanged(self):
        path = square_path()
        out = anchor_closed_path(path, [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(out.points, path.points)

    def test_anchor_rotates_to_nearest_point(self):
        path = square_path()
        out = anchor_closed_path(path, [1000.0, 480.0, 0.0])
        np.testing.assert_allclose(out.points[0], [1000.0, 480.0, 0.0], atol=1e-9)
        # All original corners survive.
        for corner in path.points:
            assert any(np.array_equal(p, corner) for p in out.points)
        assert out.total_length == pytest.approx(path.total_length)


class TestToRobotFrame:
    def make_simple_fused(self):
        path = resample(square_path(), 250.0)
        rotations = np.array(
            [gentle_profile(s, 4000.0) for s in arc_length_table(path)[: len(path.points)]]
        )
        return make_fused(path.points, rotations=rotations,
                          s=arc_length_table(path)[: len(path.points)])

    def test_identity_graph_passthrough(self):
        g = FrameGraph.from_edges(
            [
                ("E", "R", RigidTransform.identity()),
                ("R", "F", RigidTransform.identity()),
                ("F", "S", RigidTransform.identity()),
            ]
        )
        fused = self.make_simple_fused()
        out = to_robot_frame(fused, g)
        assert out.frame == "R"
        np.testing.assert_array_equal(out.positions, fused.positions)
        np.testing.assert_array_equal(out.rotations, fused.rotations)

    def test_pure_translation_shifts_positions_only(self):
        g = FrameGraph.from_edges(
            [
                ("R", "F", RigidTransform.from_translation(500, -100, 25)),
                ("F", "S", RigidTransform.identity()),
            ]
        )
        fused = self.make_simple_fused()
        out = to_robot_frame(fused, g)
        np.testing.assert_allclose(out.positions, fused.positions + [500, -100, 25])
        np.testing.assert_array_equal(out.rotations, fused.rotations)

    def test_round_trip_recovers_original(self):
        rng = np.random.default_rng(97)
        for _ in range(20):
            g = FrameGraph.from_edges(
                [
                    ("R", "F", random_transform(rng)),
                    ("F", "S", random_transform(rng)),
                ]
            )
            mount = random_transform(rng)
            fused = self.make_simple_fused()
            out = to_robot_frame(fused, g, mount=mount)
            # Map back by hand with the inverse legs.
            t_back = g.resolve("R", "F").inverse()
            positions = t_back.apply(out.positions)
            rot_s = g.resolve("R", "S").rotation
            rotations = np.einsum(
                "ab,nbc,cd->nad", rot_s.T, out.rotations, mount.rotation.T
            )
            np.testing.assert_allclose(positions, fused.positions, atol=1e-9)
            np.testing.assert_allclose(rotations, fused.rotations, atol=1e-9)
