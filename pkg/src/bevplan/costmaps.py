"""Signed-distance costmaps and footprint-projected trajectory statistics.

Convention: free space is positive (distance in meters to the nearest
occupied cell center), occupied space negative (distance to the nearest
free cell center), clamped to +-cap. Larger scores therefore mean safer
trajectories everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import Footprint, GridSpec, Pose2, footprint_cells
from .forecasting import ConfidenceMaps, SemanticMasks
from .sensing import CellClass

DEFAULT_SDF_CAP = 10.0


def sdf(mask: np.ndarray, resolution: float, cap: float = DEFAULT_SDF_CAP) -> np.ndarray:
    """Exact signed Euclidean distance field of a binary occupancy mask.

    Distances are measured between cell centers. An all-free grid is +cap
    everywhere and an all-occupied grid -cap everywhere.
    """
    occupied = np.asarray(mask, dtype=bool)
    if not occupied.any():
        return np.full(occupied.shape, cap, dtype=float)
    if occupied.all():
        return np.full(occupied.shape, -cap, dtype=float)
    dist_to_occ = ndimage.distance_transform_edt(~occupied, sampling=resolution)
    dist_to_free = ndimage.distance_transform_edt(occupied, sampling=resolution)
    signed = np.where(occupied, -dist_to_free, dist_to_occ)
    return np.clip(signed, -cap, cap)


@dataclass
class Costmap:
    """(T, H, W) stack of signed distance planes over the planning horizon."""

    spec: GridSpec
    planes: np.ndarray
    cap: float = DEFAULT_SDF_CAP

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=float)
        if self.planes.ndim != 3 or self.planes.shape[1:] != self.spec.shape:
            raise ValueError("costmap planes do not match grid spec")

    @property
    def horizon(self) -> int:
        return self.planes.shape[0]


def build_costmap(masks: SemanticMasks, cap: float = DEFAULT_SDF_CAP) -> Costmap:
    """Per-timestep SDF of the occupied class of the semantic masks."""
    planes = np.stack([
        sdf(masks.binary(t, CellClass.OCCUPIED), masks.spec.resolution, cap)
        for t in range(masks.horizon)
    ])
    return Costmap(spec=masks.spec, planes=planes, cap=cap)


def extract(plane: np.ndarray, cells: np.ndarray, strategy: str, empty_value: float) -> float:
    """Reduce plane values under a footprint cell set.

    strategy is one of {"min", "max", "avg"}. An empty cell set (footprint
    off-grid) returns ``empty_value``: callers pass the neutral worst case
    for their statistic (+cap for min-based safety scores, 0 for averages).
    """
    if len(cells) == 0:
        return float(empty_value)
    values = plane[cells[:, 0], cells[:, 1]]
    if strategy == "min":
        return float(values.min())
    if strategy == "max":
        return float(values.max())
    if strategy == "avg":
        return float(values.mean())
    raise ValueError(f"unknown extraction strategy {strategy!r}")


@dataclass(frozen=True)
class TrajectoryStats:
    """Per-candidate scalars exchanged between agents.

    score: min over time of the footprint-min SDF (meters; the fusion
    inner term). f_o / p_o: occupied mask/confidence overlap, f_s / p_s:
    shadow mask/confidence overlap.
    """

    score: float
    f_o: float
    p_o: float
    f_s: float
    p_s: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.score, self.f_o, self.p_o, self.f_s, self.p_s)


def score_trajectory(
    cost: Costmap,
    masks: SemanticMasks,
    maps: ConfidenceMaps,
    trajectory: list[Pose2],
    fp: Footprint,
) -> TrajectoryStats:
    """Footprint-projected statistics of one candidate over the horizon.

    At each step the vehicle footprint is rasterized at the trajectory
    pose (poses are in the costmap's world frame) and reduced: min of the
    SDF plane for the safety score, averages of the occupied/shadow masks
    and confidence planes for the fusion statistics.
    """
    horizon = cost.horizon
    if len(trajectory) != horizon or masks.horizon != horizon or maps.horizon != horizon:
        raise ValueError("trajectory and forecast horizons do not match")

    spec = cost.spec
    c_min = np.empty(horizon)
    occ_frac = np.empty(horizon)
    occ_conf = np.empty(horizon)
    sha_frac = np.empty(horizon)
    sha_conf = np.empty(horizon)
    for t, pose in enumerate(trajectory):
        cells = footprint_cells(spec, pose, fp)
        c_min[t] = extract(cost.planes[t], cells, "min", cost.cap)
        occ_frac[t] = extract(masks.binary(t, CellClass.OCCUPIED).astype(float), cells, "avg", 0.0)
        occ_conf[t] = extract(maps.plane(t, CellClass.OCCUPIED), cells, "avg", 0.0)
        sha_frac[t] = extract(masks.binary(t, CellClass.SHADOW).astype(float), cells, "avg", 0.0)
        sha_conf[t] = extract(maps.plane(t, CellClass.SHADOW), cells, "avg", 0.0)

    return TrajectoryStats(
        score=float(c_min.min()),
        f_o=float(occ_frac.max()),
        p_o=float(occ_conf.sum()),
        f_s=float(sha_frac.sum()),
        p_s=float(sha_conf.sum()),
    )
