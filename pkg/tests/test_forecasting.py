import numpy as np
import pytest

from bevplan.forecasting import (
    ConfidenceMaps,
    one_hot_maps,
    persistence_maps,
    to_masks,
)
from bevplan.geometry import GridSpec, Pose2
from bevplan.sensing import CellClass, N_CLASSES, ObservationRaster


def spec_10x10():
    return GridSpec(Pose2(0, 0, 0), 0.5, 10, 10)


def raster_from(cells):
    cells = np.asarray(cells, dtype=np.uint8)
    return ObservationRaster(spec=GridSpec(Pose2(0, 0, 0), 0.5, cells.shape[1], cells.shape[0]),
                             cells=cells)


def empty_raster(spec=None, cls=CellClass.EMPTY):
    spec = spec or spec_10x10()
    return ObservationRaster(spec=spec, cells=np.full(spec.shape, int(cls), np.uint8))


class TestOneHot:
    def test_masks_reproduce_truth(self):
        rng = np.random.default_rng(2)
        truth = [
            ObservationRaster(spec=spec_10x10(),
                              cells=rng.integers(0, 4, (10, 10)).astype(np.uint8))
            for _ in range(3)
        ]
        maps = one_hot_maps(truth)
        masks = to_masks(maps)
        for t in range(3):
            assert np.array_equal(masks.cells[t], truth[t].cells)

    def test_exact_normalization(self):
        maps = one_hot_maps([empty_raster()])
        assert np.all(maps.values.sum(axis=1) == 1.0)

    def test_shadow_forwarded(self):
        r = empty_raster()
        r.cells[3:5, 3:5] = CellClass.SHADOW
        maps = one_hot_maps([r])
        assert np.all(maps.plane(0, CellClass.SHADOW)[3:5, 3:5] == 1.0)

    def test_mismatched_specs_rejected(self):
        a = empty_raster()
        b = ObservationRaster(spec=GridSpec(Pose2(1, 0, 0), 0.5, 10, 10),
                              cells=np.zeros((10, 10), np.uint8))
        with pytest.raises(ValueError):
            one_hot_maps([a, b])


class TestPersistence:
    def test_requires_history(self):
        with pytest.raises(ValueError, match="insufficient history"):
            persistence_maps([empty_raster()], horizon=5)

    def test_all_empty(self):
        maps = persistence_maps([empty_raster(), empty_raster()], horizon=4)
        assert np.all(maps.plane(2, CellClass.EMPTY) == 0.9)

    def test_static_blob_stays(self):
        prev = empty_raster()
        last = empty_raster()
        for r in (prev, last):
            r.cells[4:6, 4:6] = CellClass.OCCUPIED
        maps = persistence_maps([prev, last], horizon=5)
        for t in range(5):
            assert np.all(maps.plane(t, CellClass.OCCUPIED)[4:6, 4:6] == 0.9)

    def test_moving_blob_translates_by_t_cells(self):
        # 2x2 blob moving +1 column/frame, hand-propagated
        prev = empty_raster()
        prev.cells[4:6, 2:4] = CellClass.OCCUPIED
        last = empty_raster()
        last.cells[4:6, 3:5] = CellClass.OCCUPIED
        maps = persistence_maps([prev, last], horizon=3)
        for t in range(1, 4):
            plane = maps.plane(t - 1, CellClass.OCCUPIED)
            want = np.zeros((10, 10), bool)
            cols = slice(3 + t, min(5 + t, 10))
            want[4:6, cols] = True
            assert np.array_equal(plane == 0.9, want)

    def test_shadow_persists(self):
        prev = empty_raster()
        last = empty_raster()
        last.cells[0:2, 0:2] = CellClass.SHADOW
        maps = persistence_maps([prev, last], horizon=3)
        assert np.all(maps.plane(2, CellClass.SHADOW)[0:2, 0:2] == 0.8)

    def test_stationary_forecast_constant_over_horizon(self):
        rng = np.random.default_rng(8)
        frame = ObservationRaster(spec=spec_10x10(),
                                  cells=rng.integers(0, 4, (10, 10)).astype(np.uint8))
        maps = persistence_maps([frame, frame], horizon=6)
        for t in range(1, 6):
            assert np.array_equal(maps.values[t], maps.values[0])

    def test_normalization_invariant(self):
        rng = np.random.default_rng(13)
        prev = ObservationRaster(spec=spec_10x10(),
                                 cells=rng.integers(0, 4, (10, 10)).astype(np.uint8))
        last = ObservationRaster(spec=spec_10x10(),
                                 cells=rng.integers(0, 4, (10, 10)).astype(np.uint8))
        maps = persistence_maps([prev, last], horizon=4)
        assert np.all(np.abs(maps.values.sum(axis=1) - 1.0) <= 1e-6)

    def test_deterministic(self):
        rng = np.random.default_rng(21)
        frames = [ObservationRaster(spec=spec_10x10(),
                                    cells=rng.integers(0, 4, (10, 10)).astype(np.uint8))
                  for _ in range(2)]
        a = persistence_maps(frames, horizon=4)
        b = persistence_maps(frames, horizon=4)
        assert np.array_equal(a.values, b.values)


class TestToMasks:
    def test_one_hot_identity(self):
        r = empty_raster()
        r.cells[2, 2] = CellClass.OCCUPIED
        masks = to_masks(one_hot_maps([r]))
        assert np.array_equal(masks.cells[0], r.cells)

    def test_uniform_tie_breaks_occupied(self):
        spec = spec_10x10()
        values = np.full((1, N_CLASSES, 10, 10), 0.25)
        masks = to_masks(ConfidenceMaps(spec=spec, values=values))
        assert np.all(masks.cells == int(CellClass.OCCUPIED))

    def test_shadow_beats_empty_on_tie(self):
        spec = spec_10x10()
        values = np.zeros((1, N_CLASSES, 10, 10))
        values[0, int(CellClass.EMPTY)] = 0.5
        values[0, int(CellClass.SHADOW)] = 0.5
        masks = to_masks(ConfidenceMaps(spec=spec, values=values))
        assert np.all(masks.cells == int(CellClass.SHADOW))

    def test_random_matches_argmax_oracle(self):
        rng = np.random.default_rng(5)
        spec = spec_10x10()
        raw = rng.random((4, N_CLASSES, 10, 10))
        values = raw / raw.sum(axis=1, keepdims=True)
        masks = to_masks(ConfidenceMaps(spec=spec, values=values))
        priority = [int(CellClass.OCCUPIED), int(CellClass.SHADOW),
                    int(CellClass.EMPTY), int(CellClass.OUT_OF_RANGE)]
        for t in range(4):
            for r in range(10):
                for q in range(10):
                    col = values[t, :, r, q]
                    best = max(range(N_CLASSES),
                               key=lambda c: (col[c], -priority.index(c)))
                    assert masks.cells[t, r, q] == best


class TestConfidenceMapsValidation:
    def test_rejects_unnormalized(self):
        values = np.zeros((1, N_CLASSES, 10, 10))
        with pytest.raises(ValueError, match="sum to 1"):
            ConfidenceMaps(spec=spec_10x10(), values=values)

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            ConfidenceMaps(spec=spec_10x10(), values=np.ones((1, 3, 10, 10)))
