"""Scenario mining: window slicing, candidate generation, criticality
assessment, and adversarial augmentation.

A scenario is an observation window followed by a planning window cut
from a track set, with a sampled group of communication-enabled
vehicles. A scenario is communication-critical when some actor is
invisible to the ego for the whole observation window yet collides with
one of its candidate trajectories during the planning window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .geometry import Footprint, GridSpec, Pose2, compose, rectangles_overlap
from .sensing import (
    PEDESTRIAN,
    VEHICLE,
    ActorState,
    CellClass,
    SensorConfig,
    TrackSet,
    raycast,
    render_observation,
    target_hit_by_rays,
    visible_actor_ids,
)

OBS_SECONDS = 3.0
PLAN_SECONDS = 1.0
DEFAULT_COMM_COUNT = 4

ACCEL_RANGE = (-4.0, 2.0)
YAW_RATE_RANGE = (-0.5, 0.5)
GRID_SIDE = 8  # 8x8 control grid -> 64 candidates

ROLLOUT_SUBSTEPS = 10  # keeps waypoints within 0.05 m of a dt/100 integration

OCCLUDER_FOOTPRINT = Footprint(4.5, 2.0)
OCCLUDER_OFFSET_RANGE = (5.0, 10.0)
PED_SPEED_CAP = 3.0
AUGMENT_ATTEMPTS = 100


@dataclass(frozen=True)
class Scenario:
    tracks: TrackSet
    ego_id: int
    comm_ids: frozenset[int]
    obs_frames: tuple[int, int]
    plan_frames: tuple[int, int]
    scenario_id: int = 0
    augmentation: dict | None = None

    def __post_init__(self):
        if self.ego_id not in self.comm_ids:
            raise ValueError("ego must be communication-enabled")
        if self.plan_frames[0] != self.obs_frames[1] + 1:
            raise ValueError("plan window must start right after the observation window")

    @property
    def t0_frame(self) -> int:
        return self.obs_frames[1]

    @property
    def horizon(self) -> int:
        return self.plan_frames[1] - self.plan_frames[0] + 1

    def ego_state(self, frame: int) -> ActorState:
        return self.tracks.state_of(self.ego_id, frame)

    def scene_actor_ids(self) -> set[int]:
        ids: set[int] = set()
        for k in range(self.obs_frames[0], self.plan_frames[1] + 1):
            ids.update(a.actor_id for a in self.tracks.frames[k])
        return ids


@dataclass
class CandidateSet:
    """Shared library of ego-local candidate trajectories.

    Each candidate is a fixed-horizon pose sequence in the ego frame at
    the end of the observation window; all agents hold an identical copy.
    """

    candidates: list[list[Pose2]]
    dt: float

    @property
    def n(self) -> int:
        return len(self.candidates)

    @property
    def horizon(self) -> int:
        return len(self.candidates[0]) if self.candidates else 0

    def globalized(self, ego_pose: Pose2) -> list[list[Pose2]]:
        return [[compose(ego_pose, p) for p in cand] for cand in self.candidates]


@dataclass
class CriticalityReport:
    collides_with_unseen: list[bool]
    unseen_actor_ids: set[int]

    @property
    def colliding_count(self) -> int:
        return int(sum(self.collides_with_unseen))


class AugmentationInfeasible(RuntimeError):
    """No valid adversarial placement was found within the attempt budget."""


def window_lengths(dt: float, obs_s: float = OBS_SECONDS, plan_s: float = PLAN_SECONDS) -> tuple[int, int]:
    return (int(round(obs_s / dt)), int(round(plan_s / dt)))


def slice_scenarios(
    tracks: TrackSet,
    stride: int | None = None,
    seed: int = 0,
    comm_count: int = DEFAULT_COMM_COUNT,
    obs_s: float = OBS_SECONDS,
    plan_s: float = PLAN_SECONDS,
) -> list[Scenario]:
    """Cut sliding scenario windows out of a track set.

    Communication-enabled vehicles are sampled uniformly without
    replacement among vehicles present in every frame of the window; the
    first sampled vehicle is the ego. Windows with no such vehicle are
    skipped. Deterministic given the seed; the default stride is one full
    window (non-overlapping scenarios).
    """
    obs_len, plan_len = window_lengths(tracks.dt, obs_s, plan_s)
    total = obs_len + plan_len
    if stride is None:
        stride = total
    if stride < 1:
        raise ValueError("stride must be >= 1")

    scenarios = []
    index = 0
    for start in range(0, tracks.n_frames - total + 1, stride):
        frames = tracks.frames[start : start + total]
        present = set.intersection(*[{a.actor_id for a in f} for f in frames])
        kinds = {a.actor_id: a.kind for a in frames[0]}
        vehicles = sorted(aid for aid in present if kinds[aid] == VEHICLE)
        if not vehicles:
            index += 1
            continue
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, index)))
        chosen = rng.choice(len(vehicles), size=min(comm_count, len(vehicles)), replace=False)
        comm = [vehicles[int(i)] for i in chosen]
        scenarios.append(
            Scenario(
                tracks=tracks,
                ego_id=comm[0],
                comm_ids=frozenset(comm),
                obs_frames=(start, start + obs_len - 1),
                plan_frames=(start + obs_len, start + total - 1),
                scenario_id=index,
            )
        )
        index += 1
    return scenarios


def rollout(
    initial_speed: float,
    accel: float,
    yaw_rate: float,
    dt: float,
    horizon: int,
    substeps: int = ROLLOUT_SUBSTEPS,
) -> list[Pose2]:
    """Forward-integrate the unicycle with constant controls.

    Speed is clamped at zero (no reversing). Returns the ``horizon``
    poses after each step, in the frame of the starting pose.
    """
    h = dt / substeps
    x = y = theta = 0.0
    v = float(initial_speed)
    poses = []
    for _ in range(horizon):
        for _ in range(substeps):
            x += v * math.cos(theta) * h
            y += v * math.sin(theta) * h
            theta += yaw_rate * h
            v = max(0.0, v + accel * h)
        poses.append(Pose2(x, y, theta))
    return poses


def control_grid(
    accel_range: tuple[float, float] = ACCEL_RANGE,
    yaw_rate_range: tuple[float, float] = YAW_RATE_RANGE,
    side: int = GRID_SIDE,
) -> list[tuple[float, float]]:
    """The (accel, yaw_rate) control pairs, one per candidate.

    Acceleration runs high-to-low so that low candidate ids are the
    assertive maneuvers; the enumeration order is fixed so ranking
    tie-breaks stay reproducible.
    """
    accels = np.linspace(accel_range[1], accel_range[0], side)
    yaws = np.linspace(yaw_rate_range[0], yaw_rate_range[1], side)
    return [(float(a), float(w)) for a in accels for w in yaws]


def generate_candidates(
    initial_speed: float,
    dt: float = 0.1,
    horizon: int = 10,
    accel_range: tuple[float, float] = ACCEL_RANGE,
    yaw_rate_range: tuple[float, float] = YAW_RATE_RANGE,
    side: int = GRID_SIDE,
    controls: list[tuple[float, float]] | None = None,
) -> CandidateSet:
    """Candidate library spanning the feasible maneuver envelope.

    Controls are held constant per candidate over an evenly spaced grid
    of linear accelerations and yaw rates (64 candidates by default);
    pass ``controls`` explicitly to override the grid.
    """
    if initial_speed < 0:
        raise ValueError("initial_speed must be >= 0")
    if controls is None:
        controls = control_grid(accel_range, yaw_rate_range, side)
    cands = [rollout(initial_speed, a, w, dt, horizon) for a, w in controls]
    return CandidateSet(candidates=cands, dt=dt)


def candidate_collisions(
    scn: Scenario,
    cands: CandidateSet,
    ego_fp: Footprint,
    only_actors: set[int] | None = None,
) -> list[set[int]]:
    """Per candidate, the ids of actors its footprint overlaps during the plan.

    Ground-truth geometric check: candidate poses are lifted to the
    global frame through the ego pose at the end of the observation
    window and tested per plan frame with the separating-axis test.
    """
    ego_t0 = scn.ego_state(scn.t0_frame).pose
    hits: list[set[int]] = []
    for cand in cands.candidates:
        hit: set[int] = set()
        for step, pose in enumerate(cand):
            frame = scn.plan_frames[0] + step
            if frame > scn.plan_frames[1]:
                break
            world = compose(ego_t0, pose)
            for actor in scn.tracks.frames[frame]:
                if actor.actor_id == scn.ego_id:
                    continue
                if only_actors is not None and actor.actor_id not in only_actors:
                    continue
                if actor.actor_id in hit:
                    continue
                if rectangles_overlap(world, ego_fp, actor.pose, actor.footprint):
                    hit.add(actor.actor_id)
        hits.append(hit)
    return hits


def assess_criticality(
    scn: Scenario,
    cands: CandidateSet,
    sensor: SensorConfig = SensorConfig(),
) -> CriticalityReport:
    """Flag candidates that collide with actors the ego never saw.

    An actor is unseen when it receives zero lidar ray hits from the ego
    across the entire observation window (actors absent from the window
    are unseen by definition).
    """
    visible = visible_actor_ids(scn.tracks, scn.ego_id, scn.obs_frames, sensor)
    unseen = scn.scene_actor_ids() - visible - {scn.ego_id}
    ego_fp = scn.ego_state(scn.t0_frame).footprint
    hits = candidate_collisions(scn, cands, ego_fp, only_actors=unseen)
    flags = [bool(h) for h in hits]
    involved = set().union(*hits) if hits else set()
    return CriticalityReport(collides_with_unseen=flags, unseen_actor_ids=involved)


def criticality_histogram(reports: list[CriticalityReport], n_candidates: int) -> np.ndarray:
    """Exact scenario counts per colliding-candidate count, length n+1."""
    counts = [r.colliding_count for r in reports]
    return np.bincount(counts, minlength=n_candidates + 1)


def _constant_velocity_track(
    actor_id: int,
    kind: str,
    fp: Footprint,
    start_xy: np.ndarray,
    velocity: np.ndarray,
    heading: float,
    frames: range,
    anchor_frame: int,
    dt: float,
) -> dict[int, ActorState]:
    speed = float(np.linalg.norm(velocity))
    states = {}
    for k in frames:
        pos = start_xy + velocity * ((k - anchor_frame) * dt)
        states[k] = ActorState(
            actor_id=actor_id,
            kind=kind,
            pose=Pose2(float(pos[0]), float(pos[1]), heading),
            footprint=fp,
            speed=speed,
        )
    return states


def _with_added_tracks(tracks: TrackSet, added: list[dict[int, ActorState]]) -> TrackSet:
    frames = []
    for k, frame in enumerate(tracks.frames):
        extra = [states[k] for states in added if k in states]
        frames.append(list(frame) + extra)
    return TrackSet(dt=tracks.dt, frames=frames)


def _ped_seen_in_frame(
    tracks: TrackSet,
    ego_id: int,
    occ_state: ActorState,
    ped_pose: Pose2,
    ped_fp: Footprint,
    frame: int,
    sensor: SensorConfig,
) -> bool:
    """Ray-hit test for a hypothetical pedestrian without building a TrackSet."""
    viewer = tracks.state_of(ego_id, frame)
    obstacles = [(a.pose, a.footprint) for a in tracks.frames[frame] if a.actor_id != ego_id]
    obstacles.append((occ_state.pose, occ_state.footprint))
    return target_hit_by_rays(viewer.pose, obstacles, ped_pose, ped_fp, sensor)


def augment_adversarial(
    scn: Scenario,
    seed: int,
    sensor: SensorConfig = SensorConfig(),
    grid: GridSpec | None = None,
    cands: CandidateSet | None = None,
    max_attempts: int = AUGMENT_ATTEMPTS,
    ped_speed_cap: float = PED_SPEED_CAP,
) -> Scenario:
    """Inject an adversarial occluder and pedestrian into a benign scenario.

    The occluder vehicle drives a straight line perpendicular to the ego
    heading at a sampled longitudinal offset in [5, 10] m, crossing the
    ego's axis during the later part of the observation window so that
    its shadow persists until the window ends. The pedestrian spawns at
    the mid-observation frame inside the rendered shadow region and walks
    at constant velocity onto a candidate waypoint at the matching plan
    step. Placements are rejection-sampled (occluder geometry, shadow
    cell, target waypoint) until the pedestrian provably receives zero
    ray hits for the whole observation window and the collision holds;
    existing tracks are never modified. Deterministic given the seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed,)))
    dt = scn.tracks.dt
    k0, k1 = scn.obs_frames
    k2 = scn.plan_frames[1]
    obs_len = k1 - k0 + 1
    mid_frame = (k0 + k1) // 2

    ego_t0 = scn.ego_state(k1)
    ego_fp = ego_t0.footprint
    if cands is None:
        cands = generate_candidates(ego_t0.speed, dt=dt, horizon=scn.horizon)
    if grid is None:
        grid = GridSpec(center=ego_t0.pose, resolution=0.2, width=256, height=256)

    occluder_id = max(scn.tracks.actor_ids()) + 1
    ped_id = occluder_id + 1
    ped_fp = Footprint(0.6, 0.6)
    heading = ego_t0.pose.theta
    fwd = np.array([math.cos(heading), math.sin(heading)])
    obs_seconds = obs_len * dt
    global_cands = cands.globalized(ego_t0.pose)
    targets = np.array([
        [p.x, p.y] for cand in global_cands for p in cand
    ]).reshape(cands.n, cands.horizon, 2)

    occ_rounds = max(1, max_attempts // 10)
    tries_per_round = max(1, max_attempts // occ_rounds)
    attempt = 0
    for _ in range(occ_rounds):
        d_o = rng.uniform(*OCCLUDER_OFFSET_RANGE)
        side = 1.0 if rng.integers(2) == 0 else -1.0
        # crossing timed late in the window so the shadow outlives the
        # pedestrian spawn; duration between a third and two thirds of
        # the window keeps the shadow sweep near walking speed
        cross_frac = rng.uniform(0.55, 0.95)
        duration_frac = rng.uniform(1.0 / 3.0, 2.0 / 3.0)
        crossing_speed = OCCLUDER_FOOTPRINT.length / (obs_seconds * duration_frac)
        occ_heading = heading + side * math.pi / 2.0
        occ_dir = np.array([math.cos(occ_heading), math.sin(occ_heading)])
        line_point = ego_t0.pose.xy + d_o * fwd
        k_cross = k0 + cross_frac * (obs_len - 1)

        def occ_state(k: int) -> ActorState:
            pos = line_point + occ_dir * crossing_speed * ((k - k_cross) * dt)
            return ActorState(occluder_id, VEHICLE,
                              Pose2(float(pos[0]), float(pos[1]), occ_heading),
                              OCCLUDER_FOOTPRINT, crossing_speed)

        viewer = scn.ego_state(mid_frame)
        frame = list(scn.tracks.frames[mid_frame]) + [occ_state(mid_frame)]
        obstacles = [(a.pose, a.footprint) for a in frame if a.actor_id != scn.ego_id]
        scan = raycast(viewer.pose, obstacles, sensor.n_rays, sensor.max_range)
        raster = render_observation(viewer, frame, scan, grid)
        # erode by the pedestrian's radius so its whole body starts in shadow
        margin = int(math.ceil(math.hypot(ped_fp.length, ped_fp.width) / 2 / grid.resolution))
        shadow = ndimage.binary_erosion(
            raster.cells == int(CellClass.SHADOW), iterations=margin
        )
        shadow_cells = np.argwhere(shadow)
        if len(shadow_cells) == 0:
            attempt += tries_per_round
            continue
        xs = grid.center.x + (shadow_cells[:, 1] - (grid.width - 1) / 2.0) * grid.resolution
        ys = grid.center.y + (shadow_cells[:, 0] - (grid.height - 1) / 2.0) * grid.resolution
        shadow_xy = np.stack([xs, ys], axis=1)
        depth = np.linalg.norm(shadow_xy - viewer.pose.xy, axis=1)

        for _ in range(tries_per_round):
            attempt += 1
            ci = int(rng.integers(cands.n))
            step = int(rng.integers(max(1, cands.horizon // 2), cands.horizon + 1))
            target_frame = k1 + step
            span = (target_frame - mid_frame) * dt
            target = targets[ci, step - 1]
            dist = np.linalg.norm(shadow_xy - target, axis=1)
            feasible = np.nonzero((dist <= ped_speed_cap * span) & (dist >= 0.05 * span))[0]
            if len(feasible) == 0:
                continue
            # deepest feasible cell: widest part of the wedge, longest dwell
            spawn = shadow_xy[int(feasible[int(np.argmax(depth[feasible]))])]
            velocity = (target - spawn) / span
            ped_heading = math.atan2(velocity[1], velocity[0])

            def ped_pose(k: int) -> Pose2:
                pos = spawn + velocity * ((k - mid_frame) * dt)
                return Pose2(float(pos[0]), float(pos[1]), ped_heading)

            if not rectangles_overlap(global_cands[ci][step - 1], ego_fp,
                                      ped_pose(target_frame), ped_fp):
                continue
            seen = any(
                _ped_seen_in_frame(scn.tracks, scn.ego_id, occ_state(k), ped_pose(k),
                                   ped_fp, k, sensor)
                for k in range(mid_frame, k1 + 1)
            )
            if seen:
                continue

            occ_track = {k: occ_state(k) for k in range(k0, k2 + 1)}
            ped_track = _constant_velocity_track(
                ped_id, PEDESTRIAN, ped_fp, spawn, velocity, ped_heading,
                range(mid_frame, k2 + 1), mid_frame, dt,
            )
            return replace(
                scn,
                tracks=_with_added_tracks(scn.tracks, [occ_track, ped_track]),
                augmentation={
                    "occluder_id": occluder_id,
                    "pedestrian_id": ped_id,
                    "seed": seed,
                    "attempt": attempt,
                    "candidate": ci,
                    "step": step,
                },
            )

    raise AugmentationInfeasible(
        f"augmentation infeasible: no valid placement in {max_attempts} attempts"
    )
