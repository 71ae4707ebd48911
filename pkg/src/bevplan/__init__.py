"""bevplan: multi-agent bird's-eye-view planning toolkit.

Synthesizes per-agent lidar perception from shared overhead tracks,
mines and adversarially augments communication-critical scenarios, and
scores candidate trajectories with distributed, bandwidth-efficient,
uncertainty-aware costmap fusion.
"""

from .geometry import Footprint, GridSpec, Pose2, compose, inverse, rectangles_overlap
from .sensing import (
    ActorState,
    CellClass,
    LidarScan,
    ObservationRaster,
    SensorConfig,
    TrackSet,
    observation_sequence,
    raycast,
    render_observation,
    visible_actor_ids,
)
from .forecasting import (
    ConfidenceMaps,
    OracleForecaster,
    PersistenceForecaster,
    SemanticMasks,
    one_hot_maps,
    persistence_maps,
    to_masks,
)
from .costmaps import Costmap, TrajectoryStats, build_costmap, extract, score_trajectory, sdf
from .protocol import (
    FusionConfig,
    Message,
    RoundLog,
    concern,
    fuse,
    prioritize,
    run_round,
    select_supporters,
    transform_candidates,
    uncertainty_weight,
)
from .scenarios import (
    AugmentationInfeasible,
    CandidateSet,
    CriticalityReport,
    Scenario,
    assess_criticality,
    augment_adversarial,
    criticality_histogram,
    generate_candidates,
    rollout,
    slice_scenarios,
)
from .config import ExperimentConfig, load_config
from .evaluation import (
    EvalResult,
    PolicySpec,
    craft_occlusion_suite,
    evaluate,
    run_experiment,
    suite_config,
    synth_tracks,
)

__version__ = "0.1.0"
