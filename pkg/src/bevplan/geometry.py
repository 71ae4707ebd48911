"""Planar pose algebra, grid indexing, and oriented-rectangle geometry.

All world coordinates are meters in a fixed global frame; headings are
radians normalized to (-pi, pi]. These primitives are pure functions on
immutable values and are safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class Pose2:
    """2D pose (x, y, theta) with theta kept in (-pi, pi]."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


IDENTITY = Pose2(0.0, 0.0, 0.0)


def compose(a: Pose2, b: Pose2) -> Pose2:
    """Pose of b expressed through frame a: rotate b by a.theta, then translate."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(
        a.x + b.x * c - b.y * s,
        a.y + b.x * s + b.y * c,
        a.theta + b.theta,
    )


def inverse(p: Pose2) -> Pose2:
    """Inverse pose: compose(p, inverse(p)) == identity."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2(-(p.x * c + p.y * s), -(-p.x * s + p.y * c), -p.theta)


def relative_to(frame: Pose2, world: Pose2) -> Pose2:
    """Express a world pose in the given frame."""
    return compose(inverse(frame), world)


@dataclass(frozen=True)
class Footprint:
    """Oriented rectangle dimensions: length along heading, width across."""

    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("footprint dimensions must be positive")


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned raster over the global frame.

    The grid is anchored on ``center`` (its theta is ignored for indexing:
    axes stay aligned with the global frame). Columns increase with x and
    rows with y; cell (r, c) has its center at
    ``center + resolution * (c - (width-1)/2, r - (height-1)/2)``.
    """

    center: Pose2
    resolution: float
    width: int
    height: int

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def x_coords(self) -> np.ndarray:
        return self.center.x + (np.arange(self.width) - (self.width - 1) / 2.0) * self.resolution

    def y_coords(self) -> np.ndarray:
        return self.center.y + (np.arange(self.height) - (self.height - 1) / 2.0) * self.resolution

    def cell_centers(self) -> np.ndarray:
        """(H, W, 2) array of world xy coordinates of every cell center."""
        xs = self.x_coords()
        ys = self.y_coords()
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """Nearest cell (row, col) for a world point; may be out of bounds."""
        col = round((x - self.center.x) / self.resolution + (self.width - 1) / 2.0)
        row = round((y - self.center.y) / self.resolution + (self.height - 1) / 2.0)
        return (int(row), int(col))

    def cell_to_world(self, row: int, col: int) -> tuple[float, float]:
        x = self.center.x + (col - (self.width - 1) / 2.0) * self.resolution
        y = self.center.y + (row - (self.height - 1) / 2.0) * self.resolution
        return (x, y)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width


def rect_corners(pose: Pose2, fp: Footprint) -> np.ndarray:
    """(4, 2) corner coordinates in CCW order starting front-left."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    hl, hw = fp.length / 2.0, fp.width / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([pose.x, pose.y])


def rect_edges(pose: Pose2, fp: Footprint) -> np.ndarray:
    """(4, 2, 2) array of the rectangle's edges as (start, end) point pairs."""
    corners = rect_corners(pose, fp)
    return np.stack([corners, np.roll(corners, -1, axis=0)], axis=1)


def to_rect_frame(points: np.ndarray, pose: Pose2) -> np.ndarray:
    """Rotate/translate world points (..., 2) into the rectangle's local frame."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    d = np.asarray(points, dtype=float) - np.array([pose.x, pose.y])
    return np.stack([d[..., 0] * c + d[..., 1] * s,
                     -d[..., 0] * s + d[..., 1] * c], axis=-1)


def points_in_rect(points: np.ndarray, pose: Pose2, fp: Footprint) -> np.ndarray:
    """Boundary-inclusive containment test for world points (..., 2)."""
    local = to_rect_frame(points, pose)
    return (np.abs(local[..., 0]) <= fp.length / 2.0) & (np.abs(local[..., 1]) <= fp.width / 2.0)


def footprint_cells(spec: GridSpec, pose: Pose2, fp: Footprint) -> np.ndarray:
    """In-bounds cells whose centers fall under the footprint, row-major.

    Membership is half-open in the footprint's local frame
    (-L/2 <= lx < L/2, -W/2 <= ly < W/2) so that footprints tiling the
    plane claim each cell exactly once. Returns an (N, 2) int array of
    (row, col) pairs; empty when the rectangle misses the grid.
    """
    corners = rect_corners(pose, fp)
    r_lo, c_lo = spec.world_to_cell(corners[:, 0].min(), corners[:, 1].min())
    r_hi, c_hi = spec.world_to_cell(corners[:, 0].max(), corners[:, 1].max())
    r_lo, r_hi = max(r_lo - 1, 0), min(r_hi + 1, spec.height - 1)
    c_lo, c_hi = max(c_lo - 1, 0), min(c_hi + 1, spec.width - 1)
    if r_lo > r_hi or c_lo > c_hi:
        return np.empty((0, 2), dtype=int)

    rows = np.arange(r_lo, r_hi + 1)
    cols = np.arange(c_lo, c_hi + 1)
    xs = spec.center.x + (cols - (spec.width - 1) / 2.0) * spec.resolution
    ys = spec.center.y + (rows - (spec.height - 1) / 2.0) * spec.resolution
    gx, gy = np.meshgrid(xs, ys)
    local = to_rect_frame(np.stack([gx, gy], axis=-1), pose)
    hl, hw = fp.length / 2.0, fp.width / 2.0
    hit = (local[..., 0] >= -hl) & (local[..., 0] < hl) & \
          (local[..., 1] >= -hw) & (local[..., 1] < hw)
    rr, cc = np.nonzero(hit)
    cells = np.stack([rows[rr], cols[cc]], axis=1)
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    return cells[order]


def _projection_interval(corners: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    d = corners @ axis
    return (d.min(), d.max())


def rectangles_overlap(pose_a: Pose2, fp_a: Footprint, pose_b: Pose2, fp_b: Footprint) -> bool:
    """Separating-axis test for two oriented rectangles; touching counts."""
    ca = rect_corners(pose_a, fp_a)
    cb = rect_corners(pose_b, fp_b)
    for theta in (pose_a.theta, pose_b.theta):
        c, s = math.cos(theta), math.sin(theta)
        for axis in (np.array([c, s]), np.array([-s, c])):
            lo_a, hi_a = _projection_interval(ca, axis)
            lo_b, hi_b = _projection_interval(cb, axis)
            if hi_a < lo_b or hi_b < lo_a:
                return False
    return True


def segments_intersect_rects(p0: np.ndarray, p1s: np.ndarray, poses_fps) -> np.ndarray:
    """Vectorized slab test: segments from p0 to each of p1s (N, 2) against
    each rectangle in poses_fps. Returns a (K, N) boolean matrix."""
    p1s = np.asarray(p1s, dtype=float)
    out = np.zeros((len(poses_fps), len(p1s)), dtype=bool)
    for k, (pose, fp) in enumerate(poses_fps):
        a = to_rect_frame(np.asarray(p0, float), pose)
        b = to_rect_frame(p1s, pose)
        d = b - a
        t_lo = np.zeros(len(p1s))
        t_hi = np.ones(len(p1s))
        ok = np.ones(len(p1s), dtype=bool)
        for axis, half in ((0, fp.length / 2.0), (1, fp.width / 2.0)):
            da = d[:, axis]
            aa = a[axis]
            parallel = np.abs(da) < 1e-15
            ok &= ~parallel | (np.abs(aa) <= half)
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (-half - aa) / da
                t2 = (half - aa) / da
            lo = np.minimum(t1, t2)
            hi = np.maximum(t1, t2)
            t_lo = np.where(parallel, t_lo, np.maximum(t_lo, lo))
            t_hi = np.where(parallel, t_hi, np.minimum(t_hi, hi))
        out[k] = ok & (t_lo <= t_hi)
    return out
