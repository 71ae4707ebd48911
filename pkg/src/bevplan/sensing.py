"""Per-agent perception synthesis from shared overhead tracks.

Given global-frame motion tracks of every scene actor, this module
produces what a single agent would locally perceive: a planar lidar scan
(raycast against the other actors' rectangles) and a semantic bird's-eye
raster over the classes {empty, occupied, shadow, outOfRange}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .geometry import (
    Footprint,
    GridSpec,
    Pose2,
    points_in_rect,
    rect_edges,
    segments_intersect_rects,
)

VEHICLE = "vehicle"
PEDESTRIAN = "pedestrian"

DEFAULT_VEHICLE_FOOTPRINT = Footprint(4.5, 2.0)
DEFAULT_PEDESTRIAN_FOOTPRINT = Footprint(0.6, 0.6)


class CellClass(IntEnum):
    """Semantic raster classes; values double as the raw export byte codes."""

    EMPTY = 0
    OCCUPIED = 1
    SHADOW = 2
    OUT_OF_RANGE = 3


N_CLASSES = 4

# argmax tie-break priority, most conservative first
CLASS_PRIORITY = (CellClass.OCCUPIED, CellClass.SHADOW, CellClass.EMPTY, CellClass.OUT_OF_RANGE)


@dataclass(frozen=True)
class SensorConfig:
    """Planar lidar parameters shared by raycasting and raster rendering."""

    n_rays: int = 360
    max_range: float = 25.0

    def __post_init__(self):
        if self.n_rays < 1:
            raise ValueError("n_rays must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")


@dataclass(frozen=True)
class ActorState:
    actor_id: int
    kind: str
    pose: Pose2
    footprint: Footprint
    speed: float = 0.0

    def __post_init__(self):
        if self.kind not in (VEHICLE, PEDESTRIAN):
            raise ValueError(f"unknown actor kind {self.kind!r}")
        if self.speed < 0:
            raise ValueError("speed must be >= 0")


@dataclass
class TrackSet:
    """Ordered frames of actor states at a fixed time step.

    Frame k is at time k * dt. Actor ids are unique within a frame and an
    actor keeps one footprint for its whole life; tracks may enter or
    leave the scene but must be contiguous while present.
    """

    dt: float
    frames: list[list[ActorState]] = field(default_factory=list)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.validate()

    def validate(self):
        footprints: dict[int, Footprint] = {}
        last_seen: dict[int, int] = {}
        for k, frame in enumerate(self.frames):
            ids = [a.actor_id for a in frame]
            if len(ids) != len(set(ids)):
                raise ValueError(f"duplicate actor_id in frame {k}")
            for actor in frame:
                prev = footprints.setdefault(actor.actor_id, actor.footprint)
                if prev != actor.footprint:
                    raise ValueError(f"actor {actor.actor_id} changes footprint at frame {k}")
                seen = last_seen.get(actor.actor_id)
                if seen is not None and seen != k - 1:
                    raise ValueError(f"actor {actor.actor_id} has a gap before frame {k}")
                last_seen[actor.actor_id] = k

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def actor_ids(self) -> set[int]:
        return {a.actor_id for frame in self.frames for a in frame}

    def state_of(self, actor_id: int, frame: int) -> ActorState:
        for actor in self.frames[frame]:
            if actor.actor_id == actor_id:
                return actor
        raise KeyError(f"actor {actor_id} absent from frame {frame}")

    def try_state_of(self, actor_id: int, frame: int) -> ActorState | None:
        for actor in self.frames[frame]:
            if actor.actor_id == actor_id:
                return actor
        return None


@dataclass(frozen=True)
class LidarScan:
    origin: Pose2
    n_rays: int
    max_range: float
    ranges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ranges", np.asarray(self.ranges, dtype=float))


@dataclass
class ObservationRaster:
    spec: GridSpec
    cells: np.ndarray  # (H, W) uint8 of CellClass values

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.shape != self.spec.shape:
            raise ValueError("raster shape does not match grid spec")

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.cells.ravel(), minlength=N_CLASSES)


class ViewerAbsent(ValueError):
    """The requested viewer is missing from a frame of the range."""


def _obstacle_rects(frame: list[ActorState], exclude_id: int | None):
    return [(a.pose, a.footprint, a.actor_id) for a in frame if a.actor_id != exclude_id]


def _ray_edge_distances(origin: Pose2, bearings: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """(n_rays, n_edges) matrix of hit distances; +inf where a ray misses an edge.

    Solves origin + t*dir = e0 + s*(e1-e0) per ray/edge pair with cross
    products; parallel pairs are treated as misses.
    """
    o = np.array([origin.x, origin.y])
    dirs = np.stack([np.cos(bearings), np.sin(bearings)], axis=1)  # (R, 2)
    e0 = edges[:, 0, :]  # (E, 2)
    ev = edges[:, 1, :] - edges[:, 0, :]  # (E, 2)
    rel = e0 - o  # (E, 2)

    denom = dirs[:, 0:1] * ev[None, :, 1] - dirs[:, 1:2] * ev[None, :, 0]  # (R, E)
    t_num = rel[None, :, 0] * ev[None, :, 1] - rel[None, :, 1] * ev[None, :, 0]
    s_num = rel[None, :, 0] * dirs[:, 1:2] - rel[None, :, 1] * dirs[:, 0:1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / denom
        s = s_num / denom
    valid = (np.abs(denom) > 1e-15) & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
    return np.where(valid, t, np.inf)


def raycast(
    origin: Pose2,
    obstacles: list[tuple[Pose2, Footprint]],
    n_rays: int = 360,
    max_range: float = 25.0,
) -> LidarScan:
    """Cast n_rays evenly spaced bearings starting at origin.theta.

    Ray i points at origin.theta + 2*pi*i/n_rays; its range is the
    distance to the nearest obstacle rectangle edge, or max_range when
    nothing is hit within range.
    """
    ranges, _ = raycast_hits(origin, [(p, f, i) for i, (p, f) in enumerate(obstacles)],
                             n_rays, max_range)
    return LidarScan(origin=origin, n_rays=n_rays, max_range=max_range, ranges=ranges)


def raycast_hits(
    origin: Pose2,
    obstacles: list[tuple[Pose2, Footprint, int]],
    n_rays: int,
    max_range: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Raycast with hit attribution.

    Returns (ranges, hit_ids) where hit_ids[i] is the id of the obstacle
    owning the nearest edge hit by ray i, or -1 for no hit within range.
    Obstacles are processed in list order, so callers wanting
    deterministic tie-breaking should pass them sorted by id.
    """
    bearings = origin.theta + ray_bearings(n_rays)
    if not obstacles:
        return np.full(n_rays, max_range), np.full(n_rays, -1, dtype=int)

    edges = np.concatenate([rect_edges(p, f) for p, f, _ in obstacles], axis=0)
    owners = np.repeat([oid for _, _, oid in obstacles], 4)
    dists = _ray_edge_distances(origin, bearings, edges)
    best = np.argmin(dists, axis=1)
    best_dist = dists[np.arange(n_rays), best]
    hit = best_dist <= max_range
    ranges = np.where(hit, best_dist, max_range)
    hit_ids = np.where(hit, owners[best], -1)
    return ranges, hit_ids


def ray_bearings(n: int) -> np.ndarray:
    """Bearing offsets 2*pi*i/n for i in [0, n)."""
    return 2.0 * math.pi * np.arange(n) / n


def render_observation(
    viewer: ActorState,
    frame: list[ActorState],
    scan: LidarScan,
    spec: GridSpec,
    omniscient: bool = False,
) -> ObservationRaster:
    """Label every grid cell from the viewer's perspective.

    A cell is outOfRange when its center is farther than the scan's
    max_range from the sensor origin; occupied when its center lies
    inside some non-viewer actor's rectangle and has clear line of sight;
    shadow when in range but the sight line to it crosses another actor
    strictly before the cell; empty otherwise. Cells under the viewer's
    own footprint are empty (the planner must not see itself). With
    ``omniscient=True`` every actor is force-visible and range and
    occlusion are ignored (ground-truth vision).
    """
    centers = spec.cell_centers()  # (H, W, 2)
    flat = centers.reshape(-1, 2)
    origin = np.array([scan.origin.x, scan.origin.y])

    obstacles = [(a.pose, a.footprint) for a in frame if a.actor_id != viewer.actor_id]
    inside_any = np.zeros(len(flat), dtype=bool)
    inside_per = np.zeros((len(obstacles), len(flat)), dtype=bool)
    for k, (pose, fp) in enumerate(obstacles):
        inside_per[k] = points_in_rect(flat, pose, fp)
        inside_any |= inside_per[k]

    labels = np.full(len(flat), CellClass.EMPTY, dtype=np.uint8)
    if omniscient:
        labels[inside_any] = CellClass.OCCUPIED
    else:
        dist = np.linalg.norm(flat - origin, axis=1)
        out_of_range = dist > scan.max_range
        if obstacles:
            crossing = segments_intersect_rects(origin, flat, obstacles)
            # a rectangle occludes a cell only if the cell is not its own
            occluded = np.any(crossing & ~inside_per, axis=0)
        else:
            occluded = np.zeros(len(flat), dtype=bool)
        labels[occluded] = CellClass.SHADOW
        labels[inside_any & ~occluded] = CellClass.OCCUPIED
        labels[out_of_range] = CellClass.OUT_OF_RANGE

    own = points_in_rect(flat, viewer.pose, viewer.footprint)
    labels[own] = CellClass.EMPTY
    return ObservationRaster(spec=spec, cells=labels.reshape(spec.shape))


def observation_sequence(
    tracks: TrackSet,
    viewer_id: int,
    frame_range: tuple[int, int],
    spec: GridSpec,
    sensor: SensorConfig = SensorConfig(),
    omniscient: bool = False,
) -> list[ObservationRaster]:
    """One spatially aligned raster per frame of the inclusive range."""
    k0, k1 = frame_range
    rasters = []
    for k in range(k0, k1 + 1):
        viewer = tracks.try_state_of(viewer_id, k)
        if viewer is None:
            raise ViewerAbsent(f"viewer absent: actor {viewer_id} missing from frame {k}")
        frame = tracks.frames[k]
        obstacles = [(a.pose, a.footprint) for a in frame if a.actor_id != viewer_id]
        scan = raycast(viewer.pose, obstacles, sensor.n_rays, sensor.max_range)
        rasters.append(render_observation(viewer, frame, scan, spec, omniscient=omniscient))
    return rasters


def visible_actor_ids(
    tracks: TrackSet,
    viewer_id: int,
    frame_range: tuple[int, int],
    sensor: SensorConfig = SensorConfig(),
) -> set[int]:
    """Actors hit by at least one lidar ray in at least one frame of the range."""
    k0, k1 = frame_range
    seen: set[int] = set()
    for k in range(k0, k1 + 1):
        viewer = tracks.try_state_of(viewer_id, k)
        if viewer is None:
            raise ViewerAbsent(f"viewer absent: actor {viewer_id} missing from frame {k}")
        rects = sorted(_obstacle_rects(tracks.frames[k], viewer_id), key=lambda r: r[2])
        _, hit_ids = raycast_hits(viewer.pose, rects, sensor.n_rays, sensor.max_range)
        seen.update(int(i) for i in np.unique(hit_ids) if i >= 0)
    return seen


def target_hit_by_rays(
    viewer_pose: Pose2,
    obstacles: list[tuple[Pose2, Footprint]],
    target_pose: Pose2,
    target_fp: Footprint,
    sensor: SensorConfig,
) -> bool:
    """Does any lidar ray's nearest hit land on the target rectangle?

    Only rays whose bearings can reach the target are cast, which keeps
    rejection-sampling loops fast. ``obstacles`` must not include the
    target itself.
    """
    from .geometry import rect_corners

    o = np.array([viewer_pose.x, viewer_pose.y])
    corners = rect_corners(target_pose, target_fp)
    rel = corners - o
    if np.linalg.norm(rel, axis=1).min() > sensor.max_range:
        return False

    angles = np.arctan2(rel[:, 1], rel[:, 0])
    base = math.atan2(target_pose.y - viewer_pose.y, target_pose.x - viewer_pose.x)
    spread = np.abs(np.remainder(angles - base + math.pi, 2 * math.pi) - math.pi)
    step = 2 * math.pi / sensor.n_rays
    half = spread.max() + step
    i_center = (base - viewer_pose.theta) / step
    span = int(math.ceil(half / step)) + 1
    idx = np.unique((np.arange(math.floor(i_center) - span,
                               math.ceil(i_center) + span + 1) % sensor.n_rays).astype(int))
    bearings = viewer_pose.theta + step * idx

    rects = list(obstacles) + [(target_pose, target_fp)]  # target goes last
    edges = np.concatenate([rect_edges(p, f) for p, f in rects], axis=0)
    owners = np.repeat(np.arange(len(rects)), 4)
    d = _ray_edge_distances(viewer_pose, bearings, edges)
    best = np.argmin(d, axis=1)
    best_dist = d[np.arange(len(idx)), best]
    hit = best_dist <= sensor.max_range
    return bool(np.any(hit & (owners[best] == len(rects) - 1)))


def actor_hit_in_frame(
    tracks: TrackSet,
    viewer_id: int,
    target_id: int,
    frame: int,
    sensor: SensorConfig,
) -> bool:
    """Single-actor visibility: does any ray hit target_id in this frame?"""
    viewer = tracks.try_state_of(viewer_id, frame)
    if viewer is None:
        raise ViewerAbsent(f"viewer absent: actor {viewer_id} missing from frame {frame}")
    target = tracks.try_state_of(target_id, frame)
    if target is None:
        return False
    obstacles = [(a.pose, a.footprint) for a in tracks.frames[frame]
                 if a.actor_id not in (viewer_id, target_id)]
    return target_hit_by_rays(viewer.pose, obstacles, target.pose, target.footprint, sensor)


def default_footprint(kind: str) -> Footprint:
    return DEFAULT_VEHICLE_FOOTPRINT if kind == VEHICLE else DEFAULT_PEDESTRIAN_FOOTPRINT
