"""Command-line interface.

Subcommands: synth, slice, assess, augment, evaluate, render, histogram.
Global flags (before the subcommand): --config, --seed, --out, --jobs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .geometry import GridSpec, Pose2
from .io import load_tracks, save_manifest, save_tracks
from .scenarios import AugmentationInfeasible, slice_scenarios
from .sensing import SensorConfig, observation_sequence


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tracks_from(cfg: ExperimentConfig, override: str | None):
    if override:
        return load_tracks(override, dt=cfg.windows.dt)
    if cfg.tracks:
        return load_tracks(cfg.tracks, dt=cfg.windows.dt)
    from .config import SynthConfig
    from .evaluation import synth_tracks

    return synth_tracks(cfg.synth or SynthConfig(), cfg.seed, dt=cfg.windows.dt)


def cmd_synth(args) -> int:
    from .config import SynthConfig
    from .evaluation import synth_tracks

    cfg = _load_cfg(args)
    tracks = synth_tracks(cfg.synth or SynthConfig(), cfg.seed, dt=cfg.windows.dt)
    out = _out_dir(args) / "tracks.csv"
    save_tracks(tracks, out)
    print(f"wrote {out} ({tracks.n_frames} frames, {len(tracks.actor_ids())} actors)")
    return 0


def cmd_slice(args) -> int:
    cfg = _load_cfg(args)
    tracks = _tracks_from(cfg, args.tracks)
    scenarios = slice_scenarios(tracks, stride=cfg.stride, seed=cfg.seed,
                                comm_count=cfg.comm_count,
                                obs_s=cfg.windows.obs_s, plan_s=cfg.windows.plan_s)
    out = _out_dir(args) / "scenarios.json"
    save_manifest(scenarios, out, source=args.tracks or cfg.tracks or "synthetic")
    print(f"wrote {out} ({len(scenarios)} scenarios)")
    return 0


def cmd_assess(args) -> int:
    from .evaluation import assess_all
    from .rendering import save_histogram_csv

    cfg = _load_cfg(args)
    tracks = _tracks_from(cfg, args.tracks)
    scenarios = slice_scenarios(tracks, stride=cfg.stride, seed=cfg.seed,
                                comm_count=cfg.comm_count,
                                obs_s=cfg.windows.obs_s, plan_s=cfg.windows.plan_s)
    if cfg.max_scenarios:
        scenarios = scenarios[: cfg.max_scenarios]
    reports, hist = assess_all(scenarios, cfg)
    out = _out_dir(args)
    records = [
        {
            "scenario_id": s.scenario_id,
            "colliding_count": r.colliding_count,
            "unseen_actor_ids": sorted(r.unseen_actor_ids),
        }
        for s, r in zip(scenarios, reports)
    ]
    (out / "criticality.json").write_text(
        json.dumps(records, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    save_histogram_csv(hist, out / "histogram.csv")
    critical = sum(1 for r in reports if r.colliding_count > 0)
    print(f"wrote {out / 'criticality.json'} ({critical}/{len(reports)} critical)")
    return 0


def cmd_augment(args) -> int:
    from .evaluation import prepare_scenarios

    cfg = _load_cfg(args)
    if args.tracks:
        cfg.tracks = args.tracks
    cfg.augment = True
    out = _out_dir(args)
    scenarios = prepare_scenarios(cfg, out)
    augmented = [s for s in scenarios if s.augmentation]
    save_manifest(scenarios, out / "scenarios.json", source=cfg.tracks or "synthetic")
    if augmented:
        save_tracks(augmented[0].tracks, out / "augmented_example.csv")
    print(f"wrote {out / 'scenarios.json'} ({len(augmented)}/{len(scenarios)} augmented)")
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import run_experiment

    cfg = _load_cfg(args)
    if args.tracks:
        cfg.tracks = args.tracks
    out = _out_dir(args)
    result = run_experiment(cfg, out, jobs=args.jobs or 1)
    print(f"wrote {result['metrics_csv']}")
    return 0


def cmd_render(args) -> int:
    from .costmaps import build_costmap
    from .forecasting import OracleForecaster, to_masks
    from .io import load_costmap
    from .rendering import render_costmap_plane, render_raster

    cfg = _load_cfg(args)
    out = _out_dir(args)
    if args.costmap:
        cost = load_costmap(args.costmap)
        path = render_costmap_plane(cost, args.step, out / "costmap.png")
        print(f"wrote {path}")
        return 0

    tracks = _tracks_from(cfg, args.tracks)
    frame = args.frame if args.frame is not None else tracks.n_frames - 1
    viewer = args.viewer
    if viewer is None:
        viewer = min(tracks.actor_ids())
    state = tracks.state_of(viewer, frame)
    spec = GridSpec(center=Pose2(state.pose.x, state.pose.y, 0.0),
                    resolution=cfg.grid.resolution,
                    width=cfg.grid.width, height=cfg.grid.height)
    sensor = SensorConfig(cfg.sensor_n_rays, cfg.sensor_max_range)
    raster = observation_sequence(tracks, viewer, (frame, frame), spec, sensor)[0]
    path = render_raster(raster, out / f"observation_{viewer}_{frame}.png")
    print(f"wrote {path}")
    if args.with_costmap:
        plan_len = int(round(cfg.windows.plan_s / cfg.windows.dt))
        horizon = min(frame + plan_len, tracks.n_frames - 1)
        plan = (frame + 1, horizon) if horizon > frame else (frame, frame)
        maps = OracleForecaster(sensor).forecast(tracks, viewer, (frame, frame), plan, spec)
        cost = build_costmap(to_masks(maps), cap=cfg.sdf_cap)
        path = render_costmap_plane(cost, 0, out / f"costmap_{viewer}_{frame}.png")
        print(f"wrote {path}")
    return 0


def cmd_histogram(args) -> int:
    import numpy as np

    from .rendering import render_histogram, save_histogram_csv

    cfg = _load_cfg(args)
    out = _out_dir(args)
    records = json.loads(Path(args.criticality).read_text(encoding="utf-8"))
    counts = [r["colliding_count"] for r in records]
    hist = np.bincount(counts, minlength=cfg.candidates.n + 1)
    save_histogram_csv(hist, out / "histogram.csv")
    render_histogram(hist, out / "histogram.png")
    print(f"wrote {out / 'histogram.csv'} and {out / 'histogram.png'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bevplan",
        description="Multi-agent BEV planning toolkit: simulate, mine, augment, evaluate.",
    )
    parser.add_argument("--config", help="experiment config JSON")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory (default: out/)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel scenario workers")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate synthetic seed tracks").set_defaults(fn=cmd_synth)

    p = sub.add_parser("slice", help="cut scenario windows from tracks")
    p.add_argument("--tracks", help="track CSV (overrides config)")
    p.set_defaults(fn=cmd_slice)

    p = sub.add_parser("assess", help="criticality report for sliced scenarios")
    p.add_argument("--tracks", help="track CSV (overrides config)")
    p.set_defaults(fn=cmd_assess)

    p = sub.add_parser("augment", help="adversarially augment benign scenarios")
    p.add_argument("--tracks", help="track CSV (overrides config)")
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("evaluate", help="run the policy sweep and write metrics")
    p.add_argument("--tracks", help="track CSV (overrides config)")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("render", help="render an observation or costmap to PNG/PGM")
    p.add_argument("--tracks", help="track CSV (overrides config)")
    p.add_argument("--viewer", type=int, help="viewer actor id (default: lowest)")
    p.add_argument("--frame", type=int, help="frame index (default: last)")
    p.add_argument("--costmap", help="render a saved costmap container instead")
    p.add_argument("--step", type=int, default=0, help="costmap timestep to render")
    p.add_argument("--with-costmap", action="store_true",
                   help="also render the oracle costmap at the frame")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("histogram", help="criticality histogram CSV + PNG")
    p.add_argument("criticality", help="criticality.json from the assess step")
    p.set_defaults(fn=cmd_histogram)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, AugmentationInfeasible) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
