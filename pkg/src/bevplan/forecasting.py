"""Occupancy forecasting: per-class temporal confidence maps and masks.

The forecaster contract maps an agent's aligned observation history to
softmax-normalized confidence maps over the planning horizon (one plane
per class per future step). Two reference implementations are provided:
a ground-truth oracle that forwards the viewer-relative future rendering
as one-hot confidences, and a constant-velocity persistence heuristic.
A learned model can be plugged in behind the same contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import GridSpec
from .sensing import (
    N_CLASSES,
    CLASS_PRIORITY,
    CellClass,
    ObservationRaster,
    SensorConfig,
    TrackSet,
    observation_sequence,
)

NORMALIZATION_TOL = 1e-6

# persistence heuristic confidences, exposed for configuration
PERSIST_OCCUPIED_CONF = 0.9
PERSIST_STATIC_CONF = 0.8
PERSIST_EMPTY_CONF = 0.9


@dataclass
class ConfidenceMaps:
    """(T, C, H, W) per-step, per-class confidences summing to 1 per cell."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4 or self.values.shape[1] != N_CLASSES:
            raise ValueError("values must have shape (T, n_classes, H, W)")
        if self.values.shape[2:] != self.spec.shape:
            raise ValueError("confidence planes do not match grid spec")
        sums = self.values.sum(axis=1)
        if not np.all(np.abs(sums - 1.0) <= NORMALIZATION_TOL):
            raise ValueError("class confidences must sum to 1 per cell")

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    def plane(self, step: int, cls: CellClass) -> np.ndarray:
        return self.values[step, int(cls)]


@dataclass
class SemanticMasks:
    """(T, H, W) argmax class labels of a ConfidenceMaps stack."""

    spec: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.ndim != 3 or self.cells.shape[1:] != self.spec.shape:
            raise ValueError("mask planes do not match grid spec")

    @property
    def horizon(self) -> int:
        return self.cells.shape[0]

    def binary(self, step: int, cls: CellClass) -> np.ndarray:
        return self.cells[step] == int(cls)


def _check_shared_spec(rasters: list[ObservationRaster]) -> GridSpec:
    if not rasters:
        raise ValueError("need at least one raster")
    spec = rasters[0].spec
    for r in rasters[1:]:
        if r.spec != spec:
            raise ValueError("rasters do not share a grid spec")
    return spec


def one_hot_maps(truth: list[ObservationRaster]) -> ConfidenceMaps:
    """Oracle forecast: confidence 1 on the rendered class, 0 elsewhere."""
    spec = _check_shared_spec(truth)
    t = len(truth)
    values = np.zeros((t, N_CLASSES) + spec.shape)
    for k, raster in enumerate(truth):
        for cls in range(N_CLASSES):
            values[k, cls] = raster.cells == cls
    return ConfidenceMaps(spec=spec, values=values)


def _match_components(last: np.ndarray, prev: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per connected component of ``last``: (cell indices, velocity cells/frame).

    Components are matched to the previous frame by maximal overlap, then
    by nearest centroid; unmatched components get zero velocity.
    """
    structure = np.ones((3, 3), dtype=int)
    labels_last, n_last = ndimage.label(last, structure=structure)
    labels_prev, n_prev = ndimage.label(prev, structure=structure)
    prev_centroids = (
        np.array(ndimage.center_of_mass(prev, labels_prev, range(1, n_prev + 1)))
        if n_prev else np.empty((0, 2))
    )

    out = []
    for lab in range(1, n_last + 1):
        cells = np.argwhere(labels_last == lab)
        centroid = cells.mean(axis=0)
        velocity = np.zeros(2)
        if n_prev:
            overlap = np.bincount(
                labels_prev[labels_last == lab], minlength=n_prev + 1
            )[1:]
            if overlap.max() > 0:
                match = int(np.argmax(overlap))
            else:
                match = int(np.argmin(np.linalg.norm(prev_centroids - centroid, axis=1)))
            velocity = centroid - prev_centroids[match]
        out.append((cells, velocity))
    return out


def persistence_maps(observations: list[ObservationRaster], horizon: int) -> ConfidenceMaps:
    """Constant-velocity baseline forecast.

    Occupied regions move with the velocity estimated from the last two
    frames (per-component centroid displacement); shadow and outOfRange
    cells persist from the last observation; everything else is empty.
    """
    if len(observations) < 2:
        raise ValueError("insufficient history: need >= 2 observation frames")
    spec = _check_shared_spec(observations)
    last = observations[-1].cells
    prev = observations[-2].cells

    components = _match_components(
        last == int(CellClass.OCCUPIED), prev == int(CellClass.OCCUPIED)
    )

    h, w = spec.shape
    rest = (1.0 - PERSIST_EMPTY_CONF) / (N_CLASSES - 1)
    values = np.full((horizon, N_CLASSES, h, w), rest)
    values[:, int(CellClass.EMPTY)] = PERSIST_EMPTY_CONF

    rest_static = (1.0 - PERSIST_STATIC_CONF) / (N_CLASSES - 1)
    for cls in (CellClass.SHADOW, CellClass.OUT_OF_RANGE):
        sel = last == int(cls)
        for t in range(horizon):
            for c in range(N_CLASSES):
                conf = PERSIST_STATIC_CONF if c == int(cls) else rest_static
                values[t, c][sel] = conf

    rest_occ = (1.0 - PERSIST_OCCUPIED_CONF) / (N_CLASSES - 1)
    for t in range(horizon):
        occupied = np.zeros((h, w), dtype=bool)
        for cells, velocity in components:
            shifted = cells + np.rint(velocity * (t + 1)).astype(int)
            keep = (
                (shifted[:, 0] >= 0) & (shifted[:, 0] < h)
                & (shifted[:, 1] >= 0) & (shifted[:, 1] < w)
            )
            occupied[shifted[keep, 0], shifted[keep, 1]] = True
        for c in range(N_CLASSES):
            conf = PERSIST_OCCUPIED_CONF if c == int(CellClass.OCCUPIED) else rest_occ
            values[t, c][occupied] = conf

    return ConfidenceMaps(spec=spec, values=values)


def to_masks(maps: ConfidenceMaps) -> SemanticMasks:
    """Channel-wise argmax with a fixed tie-break.

    Ties resolve by class priority occupied > shadow > empty > outOfRange
    (conservative for safety).
    """
    order = [int(c) for c in CLASS_PRIORITY]
    reordered = maps.values[:, order]  # (T, C, H, W) in priority order
    winner = np.argmax(reordered, axis=1)  # first max wins = priority order
    lut = np.array(order, dtype=np.uint8)
    return SemanticMasks(spec=maps.spec, cells=lut[winner])


class OracleForecaster:
    """Forwards ground-truth future observations as one-hot confidences.

    Isolates the collaboration protocol from prediction error: the
    forecast is exactly what the viewer will observe, including its own
    future shadows and range limits. ``omniscient=True`` removes those
    limits (every actor force-visible), for ground-truth-vision baselines.
    """

    def __init__(self, sensor: SensorConfig = SensorConfig(), omniscient: bool = False):
        self.sensor = sensor
        self.omniscient = omniscient

    def forecast(
        self,
        tracks: TrackSet,
        viewer_id: int,
        obs_frames: tuple[int, int],
        plan_frames: tuple[int, int],
        spec: GridSpec,
    ) -> ConfidenceMaps:
        future = observation_sequence(
            tracks, viewer_id, plan_frames, spec, self.sensor, omniscient=self.omniscient
        )
        return one_hot_maps(future)


class PersistenceForecaster:
    """Renders the observation window, then propagates it forward."""

    def __init__(self, sensor: SensorConfig = SensorConfig()):
        self.sensor = sensor

    def forecast(self, tracks, viewer_id, obs_frames, plan_frames, spec) -> ConfidenceMaps:
        history = observation_sequence(tracks, viewer_id, obs_frames, spec, self.sensor)
        horizon = plan_frames[1] - plan_frames[0] + 1
        return persistence_maps(history, horizon)


FORECASTERS = {
    "oracle": OracleForecaster,
    "persistence": PersistenceForecaster,
}
