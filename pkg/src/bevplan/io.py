"""File formats: track CSV, raster/costmap containers, manifests.

Track CSV (UTF-8, header row)::

    track_id,frame,kind,x,y,theta,speed,length,width

with kind in {vehicle, pedestrian}, SI units and radians. Frames need
not start at zero but must be contiguous per track. Float fields are
written with repr (shortest round-trip), so a load/save cycle is
byte-stable.

Confidence maps and costmaps share a binary container: little-endian
float32 planes concatenated in (step, class) order for confidences and
step order for costmaps, with a JSON sidecar describing the grid, the
horizon, and the plane order.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .costmaps import Costmap
from .forecasting import ConfidenceMaps, N_CLASSES
from .geometry import Footprint, GridSpec, Pose2
from .scenarios import CandidateSet, Scenario
from .sensing import ActorState, CellClass, ObservationRaster, TrackSet

TRACK_HEADER = ["track_id", "frame", "kind", "x", "y", "theta", "speed", "length", "width"]
CLASS_ORDER = [c.name for c in (CellClass.EMPTY, CellClass.OCCUPIED,
                                CellClass.SHADOW, CellClass.OUT_OF_RANGE)]


def save_tracks(tracks: TrackSet, path: str | Path) -> None:
    rows = []
    for k, frame in enumerate(tracks.frames):
        for a in frame:
            rows.append((a.actor_id, k, a.kind, a.pose.x, a.pose.y, a.pose.theta,
                         a.speed, a.footprint.length, a.footprint.width))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACK_HEADER)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def load_tracks(path: str | Path, dt: float) -> TrackSet:
    from .sensing import default_footprint

    by_frame: dict[int, list[ActorState]] = {}
    max_frame = -1
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACK_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"track file missing columns: {sorted(missing)}")
        for row in reader:
            frame = int(row["frame"])
            max_frame = max(max_frame, frame)
            if row["length"] and row["width"]:
                fp = Footprint(float(row["length"]), float(row["width"]))
            else:
                fp = default_footprint(row["kind"])  # dimensions omitted
            by_frame.setdefault(frame, []).append(
                ActorState(
                    actor_id=int(row["track_id"]),
                    kind=row["kind"],
                    pose=Pose2(float(row["x"]), float(row["y"]), float(row["theta"])),
                    footprint=fp,
                    speed=float(row["speed"]),
                )
            )
    frames = [sorted(by_frame.get(k, []), key=lambda a: a.actor_id)
              for k in range(max_frame + 1)]
    return TrackSet(dt=dt, frames=frames)


def save_raster_pgm(raster: ObservationRaster, path: str | Path) -> None:
    """Binary PGM with one byte per cell holding the raw class code."""
    save_plane_pgm(raster.cells, path, maxval=3)


def save_plane_pgm(plane: np.ndarray, path: str | Path, maxval: int = 255) -> None:
    data = np.asarray(plane)
    if data.dtype != np.uint8:
        raise ValueError("PGM export expects uint8 data")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(data.tobytes())


def load_raster_pgm(path: str | Path, spec: GridSpec) -> ObservationRaster:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError("not a binary PGM file")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        fh.readline()  # maxval
        data = np.frombuffer(fh.read(w * h), dtype=np.uint8).reshape(h, w)
    return ObservationRaster(spec=spec, cells=data.copy())


def _grid_record(spec: GridSpec) -> dict:
    return {
        "center": {"x": spec.center.x, "y": spec.center.y, "theta": spec.center.theta},
        "resolution": spec.resolution,
        "width": spec.width,
        "height": spec.height,
    }


def _grid_from_record(rec: dict) -> GridSpec:
    c = rec["center"]
    return GridSpec(
        center=Pose2(c["x"], c["y"], c["theta"]),
        resolution=rec["resolution"],
        width=rec["width"],
        height=rec["height"],
    )


def save_confidence_maps(maps: ConfidenceMaps, path: str | Path) -> None:
    """float32 planes in (step, class) order plus a JSON sidecar."""
    path = Path(path)
    planes = maps.values.astype("<f4")
    planes.tofile(path)
    sidecar = {
        "kind": "confidence_maps",
        "grid": _grid_record(maps.spec),
        "horizon": maps.horizon,
        "class_order": CLASS_ORDER,
        "dtype": "<f4",
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_confidence_maps(path: str | Path) -> ConfidenceMaps:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text(encoding="utf-8"))
    spec = _grid_from_record(sidecar["grid"])
    t = sidecar["horizon"]
    values = np.fromfile(path, dtype="<f4").reshape(t, N_CLASSES, spec.height, spec.width)
    return ConfidenceMaps(spec=spec, values=values.astype(np.float64))


def save_costmap(cost: Costmap, path: str | Path) -> None:
    """float32 plane per timestep plus a JSON sidecar (mirrors the maps container)."""
    path = Path(path)
    cost.planes.astype("<f4").tofile(path)
    sidecar = {
        "kind": "costmap",
        "grid": _grid_record(cost.spec),
        "horizon": cost.horizon,
        "cap": cost.cap,
        "dtype": "<f4",
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_costmap(path: str | Path) -> Costmap:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text(encoding="utf-8"))
    spec = _grid_from_record(sidecar["grid"])
    planes = np.fromfile(path, dtype="<f4").reshape(sidecar["horizon"], spec.height, spec.width)
    return Costmap(spec=spec, planes=planes.astype(np.float64), cap=sidecar["cap"])


def save_candidates_csv(cands: CandidateSet, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["candidate_id", "step", "x", "y", "theta"])
        for i, cand in enumerate(cands.candidates):
            for step, pose in enumerate(cand, start=1):
                writer.writerow([i, step, repr(pose.x), repr(pose.y), repr(pose.theta)])


def scenario_manifest(scn: Scenario, source: str = "") -> dict:
    return {
        "scenario_id": scn.scenario_id,
        "source": source,
        "ego_id": scn.ego_id,
        "comm_ids": sorted(scn.comm_ids),
        "obs_frames": list(scn.obs_frames),
        "plan_frames": list(scn.plan_frames),
        "augmentation": scn.augmentation,
    }


def save_manifest(scenarios: list[Scenario], path: str | Path, source: str = "") -> None:
    records = [scenario_manifest(s, source) for s in scenarios]
    Path(path).write_text(
        json.dumps(records, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_jsonl(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def save_round_trace(log, path: str | Path) -> None:
    """One JSON line per message of a protocol round, in bus order."""
    write_jsonl([m.to_record() for m in log.messages], path)
