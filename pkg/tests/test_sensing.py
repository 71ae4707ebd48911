import math

import numpy as np
import pytest

from bevplan.geometry import Footprint, GridSpec, Pose2, rect_corners
from bevplan.sensing import (
    ActorState,
    CellClass,
    SensorConfig,
    TrackSet,
    ViewerAbsent,
    observation_sequence,
    raycast,
    render_observation,
    visible_actor_ids,
)


def vehicle(aid, x, y, theta=0.0, speed=0.0, fp=Footprint(4.5, 2.0)):
    return ActorState(aid, "vehicle", Pose2(x, y, theta), fp, speed)


def walker(aid, x, y, theta=0.0, speed=0.0):
    return ActorState(aid, "pedestrian", Pose2(x, y, theta), Footprint(0.6, 0.6), speed)


# --- independent oracles -----------------------------------------------------

def ray_segment_hit(ox, oy, dx, dy, ax, ay, bx, by):
    """Solve the 2x2 system for one ray/segment pair; None when parallel/miss."""
    m = np.array([[dx, ax - bx], [dy, ay - by]])
    rhs = np.array([ax - ox, ay - oy])
    det = np.linalg.det(m)
    if abs(det) < 1e-14:
        return None
    t, s = np.linalg.solve(m, rhs)
    if t >= 0.0 and 0.0 <= s <= 1.0:
        return t
    return None


def raycast_oracle(origin, obstacles, n_rays, max_range):
    ranges = []
    hits = []
    for i in range(n_rays):
        bearing = origin.theta + 2 * math.pi * i / n_rays
        dx, dy = math.cos(bearing), math.sin(bearing)
        best, owner = math.inf, -1
        for oid, (pose, fp) in enumerate(obstacles):
            corners = rect_corners(pose, fp)
            for e in range(4):
                a = corners[e]
                b = corners[(e + 1) % 4]
                t = ray_segment_hit(origin.x, origin.y, dx, dy, a[0], a[1], b[0], b[1])
                if t is not None and t < best:
                    best, owner = t, oid
        if best <= max_range:
            ranges.append(best)
            hits.append(owner)
        else:
            ranges.append(max_range)
            hits.append(-1)
    return np.array(ranges), np.array(hits)


def point_in_rect_scalar(x, y, pose, fp):
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dx, dy = x - pose.x, y - pose.y
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    return abs(lx) <= fp.length / 2 and abs(ly) <= fp.width / 2


def segment_hits_rect_scalar(x0, y0, x1, y1, pose, fp):
    c, s = math.cos(pose.theta), math.sin(pose.theta)

    def local(x, y):
        dx, dy = x - pose.x, y - pose.y
        return (dx * c + dy * s, -dx * s + dy * c)

    ax, ay = local(x0, y0)
    bx, by = local(x1, y1)
    t_lo, t_hi = 0.0, 1.0
    for a0, d0, half in ((ax, bx - ax, fp.length / 2), (ay, by - ay, fp.width / 2)):
        if abs(d0) < 1e-15:
            if abs(a0) > half:
                return False
            continue
        t1, t2 = (-half - a0) / d0, (half - a0) / d0
        if t1 > t2:
            t1, t2 = t2, t1
        t_lo, t_hi = max(t_lo, t1), min(t_hi, t2)
        if t_lo > t_hi:
            return False
    return True


def render_oracle(viewer, frame, spec, max_range):
    """Per-cell decision tree with scalar geometry, matching the documented
    class precedence: own-footprint empty, then outOfRange, then
    occupied/shadow from containment plus line of sight."""
    obstacles = [(a.pose, a.footprint) for a in frame if a.actor_id != viewer.actor_id]
    cells = np.zeros(spec.shape, dtype=np.uint8)
    for r in range(spec.height):
        for q in range(spec.width):
            x, y = spec.cell_to_world(r, q)
            if point_in_rect_scalar(x, y, viewer.pose, viewer.footprint):
                cells[r, q] = CellClass.EMPTY
                continue
            if math.hypot(x - viewer.pose.x, y - viewer.pose.y) > max_range:
                cells[r, q] = CellClass.OUT_OF_RANGE
                continue
            occluded = False
            inside = False
            for pose, fp in obstacles:
                contains = point_in_rect_scalar(x, y, pose, fp)
                inside = inside or contains
                if not contains and segment_hits_rect_scalar(
                    viewer.pose.x, viewer.pose.y, x, y, pose, fp
                ):
                    occluded = True
            if occluded:
                cells[r, q] = CellClass.SHADOW
            elif inside:
                cells[r, q] = CellClass.OCCUPIED
            else:
                cells[r, q] = CellClass.EMPTY
    return cells


def random_scene(rng, n_rects, spread=10.0):
    return [
        (
            Pose2(*rng.uniform(-spread, spread, 2), rng.uniform(-math.pi, math.pi)),
            Footprint(rng.uniform(0.5, 4.0), rng.uniform(0.5, 2.5)),
        )
        for _ in range(n_rects)
    ]


# --- raycast -----------------------------------------------------------------

class TestRaycast:
    def test_empty_scene(self):
        scan = raycast(Pose2(0, 0, 0), [], n_rays=16, max_range=20.0)
        assert np.all(scan.ranges == 20.0)

    def test_square_dead_ahead(self):
        scan = raycast(Pose2(0, 0, 0), [(Pose2(5, 0, 0), Footprint(2, 2))],
                       n_rays=360, max_range=25.0)
        assert scan.ranges[0] == pytest.approx(4.0, abs=1e-12)

    def test_random_scenes_match_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            origin = Pose2(*rng.uniform(-2, 2, 2), rng.uniform(-math.pi, math.pi))
            obstacles = random_scene(rng, 5)
            scan = raycast(origin, obstacles, n_rays=90, max_range=18.0)
            want, _ = raycast_oracle(origin, obstacles, 90, 18.0)
            np.testing.assert_allclose(scan.ranges, want, atol=1e-9)

    def test_adding_obstacle_never_increases_range(self):
        rng = np.random.default_rng(23)
        origin = Pose2(0, 0, 0.2)
        obstacles = random_scene(rng, 4)
        base = raycast(origin, obstacles, 180, 20.0).ranges
        more = raycast(origin, obstacles + random_scene(rng, 2), 180, 20.0).ranges
        assert np.all(more <= base + 1e-12)


# --- rendering ---------------------------------------------------------------

def small_spec(center=Pose2(0, 0, 0), res=0.5, side=24):
    return GridSpec(center, res, side, side)


class TestRenderObservation:
    def test_empty_scene_classes(self):
        spec = small_spec()
        viewer = vehicle(1, 0, 0)
        scan = raycast(viewer.pose, [], 90, 4.0)
        raster = render_observation(viewer, [viewer], scan, spec)
        centers = spec.cell_centers()
        dist = np.linalg.norm(centers, axis=-1)
        assert np.all(raster.cells[dist > 4.0] == CellClass.OUT_OF_RANGE)
        assert np.all(raster.cells[dist <= 4.0] == CellClass.EMPTY)

    def test_cell_inside_visible_actor_occupied(self):
        spec = small_spec()
        viewer = vehicle(1, -4, 0)
        other = vehicle(2, 2, 0)
        frame = [viewer, other]
        scan = raycast(viewer.pose, [(other.pose, other.footprint)], 360, 25.0)
        raster = render_observation(viewer, frame, scan, spec)
        r, q = spec.world_to_cell(2, 0)
        assert raster.cells[r, q] == CellClass.OCCUPIED

    def test_far_cell_behind_obstacle_is_shadow(self):
        spec = small_spec()
        viewer = vehicle(1, -5, 0)
        occluder = vehicle(2, 0, 0)
        frame = [viewer, occluder]
        scan = raycast(viewer.pose, [(occluder.pose, occluder.footprint)], 360, 25.0)
        raster = render_observation(viewer, frame, scan, spec)
        r, q = spec.world_to_cell(4.0, 0)
        assert raster.cells[r, q] == CellClass.SHADOW

    def test_partition_sums_to_grid_size(self):
        rng = np.random.default_rng(29)
        spec = small_spec()
        viewer = vehicle(1, 0, 0)
        frame = [viewer] + [
            vehicle(i + 2, *rng.uniform(-5, 5, 2), rng.uniform(-3, 3)) for i in range(4)
        ]
        scan = raycast(viewer.pose,
                       [(a.pose, a.footprint) for a in frame[1:]], 360, 6.0)
        raster = render_observation(viewer, frame, scan, spec)
        assert raster.class_counts().sum() == spec.width * spec.height

    def test_random_scenes_match_per_cell_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(8):
            spec = small_spec(res=0.6, side=18)
            viewer = vehicle(1, *rng.uniform(-1, 1, 2), rng.uniform(-math.pi, math.pi))
            frame = [viewer] + [
                ActorState(i + 2, "vehicle",
                           Pose2(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi)),
                           Footprint(rng.uniform(0.6, 3.5), rng.uniform(0.6, 2.2)), 0.0)
                for i in range(4)
            ]
            max_range = 5.5
            scan = raycast(viewer.pose,
                           [(a.pose, a.footprint) for a in frame[1:]], 60, max_range)
            raster = render_observation(viewer, frame, scan, spec)
            want = render_oracle(viewer, frame, spec, max_range)
            np.testing.assert_array_equal(raster.cells, want)

    def test_viewer_footprint_forced_empty(self):
        spec = small_spec()
        viewer = vehicle(1, 0, 0)
        scan = raycast(viewer.pose, [], 90, 10.0)
        raster = render_observation(viewer, [viewer], scan, spec)
        r, q = spec.world_to_cell(0, 0)
        assert raster.cells[r, q] == CellClass.EMPTY

    def test_omniscient_has_no_shadow_or_range(self):
        spec = small_spec()
        viewer = vehicle(1, 0, 0)
        frame = [viewer, vehicle(2, 3, 0), walker(3, 5, 2)]
        scan = raycast(viewer.pose, [(a.pose, a.footprint) for a in frame[1:]], 90, 4.0)
        raster = render_observation(viewer, frame, scan, spec, omniscient=True)
        counts = raster.class_counts()
        assert counts[int(CellClass.SHADOW)] == 0
        assert counts[int(CellClass.OUT_OF_RANGE)] == 0
        r, q = spec.world_to_cell(5, 2)
        assert raster.cells[r, q] == CellClass.OCCUPIED


def two_frame_tracks(actors_by_frame, dt=0.1):
    return TrackSet(dt=dt, frames=actors_by_frame)


class TestSequencesAndVisibility:
    def test_single_frame_range(self):
        viewer = vehicle(1, 0, 0)
        tracks = two_frame_tracks([[viewer, vehicle(2, 4, 1)]])
        spec = small_spec()
        out = observation_sequence(tracks, 1, (0, 0), spec)
        assert len(out) == 1

    def test_static_scene_rasters_identical(self):
        frame = [vehicle(1, 0, 0), vehicle(2, 4, 1), walker(3, -3, 2)]
        tracks = two_frame_tracks([list(frame) for _ in range(4)])
        spec = small_spec()
        rasters = observation_sequence(tracks, 1, (0, 3), spec)
        for r in rasters[1:]:
            assert np.array_equal(r.cells, rasters[0].cells)

    def test_missing_viewer_raises(self):
        tracks = two_frame_tracks([[vehicle(1, 0, 0)], [vehicle(2, 5, 5)]])
        with pytest.raises(ViewerAbsent, match="viewer absent"):
            observation_sequence(tracks, 1, (0, 1), small_spec())

    def test_adjacent_actor_visible(self):
        tracks = two_frame_tracks([[vehicle(1, 0, 0), vehicle(2, 6, 0)]])
        assert visible_actor_ids(tracks, 1, (0, 0)) == {2}

    def test_alone_in_scene(self):
        tracks = two_frame_tracks([[vehicle(1, 0, 0)]])
        assert visible_actor_ids(tracks, 1, (0, 0)) == set()

    def test_moving_occluder_shadow_tracks_oracle(self):
        # the shadow region sweeps with the occluder, frame by frame
        spec = small_spec(res=0.6, side=18)
        viewer = vehicle(1, -4, 0)
        frames = []
        for k in range(3):
            frames.append([viewer, vehicle(2, 1.0, -2.0 + 1.5 * k, math.pi / 2, 1.5)])
        tracks = two_frame_tracks(frames)
        sensor = SensorConfig(n_rays=90, max_range=6.0)
        rasters = observation_sequence(tracks, 1, (0, 2), spec, sensor)
        for k, raster in enumerate(rasters):
            want = render_oracle(viewer, frames[k], spec, sensor.max_range)
            np.testing.assert_array_equal(raster.cells, want)
        assert not np.array_equal(rasters[0].cells, rasters[2].cells)

    def test_hidden_behind_wide_occluder(self):
        # wall between viewer and pedestrian for the whole range
        frames = []
        for k in range(3):
            frames.append([
                vehicle(1, 0, 0),
                ActorState(2, "vehicle", Pose2(5, 0, math.pi / 2), Footprint(12.0, 2.0), 0.0),
                walker(3, 9, 0),
            ])
        tracks = two_frame_tracks(frames)
        sensor = SensorConfig(n_rays=360, max_range=25.0)
        visible = visible_actor_ids(tracks, 1, (0, 2), sensor)
        assert 2 in visible
        assert 3 not in visible
        # oracle cross-check: no ray's nearest hit belongs to the pedestrian
        obstacles = [(tracks.frames[0][1].pose, tracks.frames[0][1].footprint),
                     (tracks.frames[0][2].pose, tracks.frames[0][2].footprint)]
        _, hits = raycast_oracle(Pose2(0, 0, 0), obstacles, 360, 25.0)
        assert not np.any(hits == 1)

    def test_monotone_occlusion_on_cells(self):
        # adding an obstacle never turns a shadow/outOfRange cell empty
        rng = np.random.default_rng(53)
        spec = small_spec(res=0.6, side=18)
        viewer = vehicle(1, 0, 0)
        base = [viewer] + [
            ActorState(i + 2, "vehicle",
                       Pose2(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi)),
                       Footprint(2.5, 1.5), 0.0)
            for i in range(3)
        ]
        extra = base + [ActorState(9, "vehicle", Pose2(2.5, 1.0, 0.4),
                                   Footprint(3.0, 1.8), 0.0)]
        max_range = 5.0
        scan_a = raycast(viewer.pose, [(a.pose, a.footprint) for a in base[1:]],
                         90, max_range)
        scan_b = raycast(viewer.pose, [(a.pose, a.footprint) for a in extra[1:]],
                         90, max_range)
        a = render_observation(viewer, base, scan_a, spec).cells
        b = render_observation(viewer, extra, scan_b, spec).cells
        was_unknown = (a == CellClass.SHADOW) | (a == CellClass.OUT_OF_RANGE)
        assert not np.any(was_unknown & (b == CellClass.EMPTY))

    def test_visibility_monotone_under_added_occluder(self):
        rng = np.random.default_rng(59)
        for _ in range(5):
            actors = [vehicle(1, 0, 0)] + [
                ActorState(i + 2, "vehicle",
                           Pose2(*rng.uniform(-8, 8, 2), rng.uniform(-math.pi, math.pi)),
                           Footprint(2.5, 1.5), 0.0)
                for i in range(4)
            ]
            occluder = ActorState(50, "vehicle",
                                  Pose2(*rng.uniform(-4, 4, 2), rng.uniform(-math.pi, math.pi)),
                                  Footprint(5.0, 2.5), 0.0)
            before = visible_actor_ids(two_frame_tracks([actors]), 1, (0, 0))
            after = visible_actor_ids(two_frame_tracks([actors + [occluder]]), 1, (0, 0))
            assert (after - {50}) <= before

    def test_visibility_attribution_matches_oracle(self):
        rng = np.random.default_rng(37)
        for _ in range(10):
            actors = [vehicle(1, 0, 0)] + [
                ActorState(i + 2, "vehicle",
                           Pose2(*rng.uniform(-8, 8, 2), rng.uniform(-math.pi, math.pi)),
                           Footprint(rng.uniform(0.8, 4), rng.uniform(0.8, 2)), 0.0)
                for i in range(5)
            ]
            tracks = two_frame_tracks([actors])
            sensor = SensorConfig(n_rays=180, max_range=15.0)
            got = visible_actor_ids(tracks, 1, (0, 0), sensor)
            obstacles = [(a.pose, a.footprint) for a in actors[1:]]
            _, hits = raycast_oracle(Pose2(0, 0, 0), obstacles, 180, 15.0)
            want = {actors[1 + oid].actor_id for oid in np.unique(hits) if oid >= 0}
            assert got == want


class TestTrackSetValidation:
    def test_duplicate_id_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            TrackSet(dt=0.1, frames=[[vehicle(1, 0, 0), vehicle(1, 3, 0)]])

    def test_footprint_change_rejected(self):
        with pytest.raises(ValueError, match="footprint"):
            TrackSet(dt=0.1, frames=[
                [vehicle(1, 0, 0, fp=Footprint(4, 2))],
                [vehicle(1, 1, 0, fp=Footprint(5, 2))],
            ])

    def test_track_gap_rejected(self):
        with pytest.raises(ValueError, match="gap"):
            TrackSet(dt=0.1, frames=[
                [vehicle(1, 0, 0)],
                [vehicle(2, 0, 0)],
                [vehicle(1, 2, 0), vehicle(2, 1, 0)],
            ])
