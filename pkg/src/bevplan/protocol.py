"""Distributed trajectory evaluation round over a simulated message bus.

One round: the ego broadcasts its pose; every supporter transforms the
shared candidate set into its own raster frame, scores it against its
local forecast, and answers with a single concern scalar; the ego picks
supporters worth a full reply, requests their per-candidate statistics,
fuses the scores, and ranks the candidates. The bus is a deterministic
in-process queue with per-message payload byte accounting; there is no
latency or loss model, but the Message record is the injection point for
one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .costmaps import TrajectoryStats
from .geometry import Pose2, compose, relative_to

BROADCAST = -1

POSE_BYTES = 24  # one (x, y, theta) triple
CONCERN_BYTES = 8  # one scalar
SCORE_REQUEST_BYTES = 0
STAT_SCALARS = 5  # score, f_o, p_o, f_s, p_s


def score_reply_bytes(n_candidates: int) -> int:
    return 8 * STAT_SCALARS * n_candidates


@dataclass(frozen=True)
class Message:
    kind: str  # PoseBroadcast | ConcernReply | ScoreRequest | ScoreReply
    sender: int
    receiver: int  # actor id or BROADCAST
    payload_bytes: int
    payload: object = None  # kind-specific record; not part of the trace export

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "sender": self.sender,
            "receiver": self.receiver,
            "payload_bytes": self.payload_bytes,
        }


class MessageBus:
    """Ordered in-process delivery with byte accounting."""

    def __init__(self):
        self.messages: list[Message] = []

    def send(self, kind: str, sender: int, receiver: int, payload_bytes: int,
             payload: object = None) -> None:
        self.messages.append(Message(kind, sender, receiver, payload_bytes, payload))

    @property
    def bytes_sent(self) -> int:
        return sum(m.payload_bytes for m in self.messages)


MODES = ("ego_only", "naive_all", "selective", "uncertainty")
SELECTION_POLICIES = ("top1", "above_ego", "threshold")


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "selective"
    selection_policy: str = "above_ego"
    threshold: float = 0.0
    n_available: int = 3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown fusion mode {self.mode!r}")
        if self.selection_policy not in SELECTION_POLICIES:
            raise ValueError(f"unknown selection policy {self.selection_policy!r}")
        if self.selection_policy == "threshold" and self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.n_available < 0:
            raise ValueError("n_available must be >= 0")


@dataclass
class RoundLog:
    links_used: int
    bytes_sent: int
    fused: list[float]
    ranking: list[int]
    messages: list[Message] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "links_used": self.links_used,
            "bytes_sent": self.bytes_sent,
            "fused": self.fused,
            "ranking": self.ranking,
        }


def transform_candidates(
    candidates: list[list[Pose2]],
    ego_pose: Pose2,
    supporter_anchor: Pose2,
) -> list[list[Pose2]]:
    """Re-express ego-local candidate poses in a supporter's raster frame.

    Each pose is lifted to the global frame through the broadcast ego
    pose, then expressed relative to the supporter's anchor:
    compose(supporter_anchor, out) == compose(ego_pose, in).
    """
    rel = relative_to(supporter_anchor, ego_pose)
    return [[compose(rel, p) for p in cand] for cand in candidates]


def concern(stats: list[TrajectoryStats]) -> float:
    """Single-scalar summary of predicted occupancy over all candidates."""
    return float(sum(s.p_o for s in stats))


def select_supporters(
    w_ego: float,
    w_supporters: dict[int, float],
    policy: str = "above_ego",
    threshold: float = 0.0,
) -> set[int]:
    """Decide which supporters are worth a full score reply.

    top1: the single most concerned supporter, unless its concern does
    not exceed the ego's (then nobody). above_ego: every supporter more
    concerned than the ego. threshold: every supporter above a fixed bar.
    """
    if not w_supporters:
        return set()
    if policy == "top1":
        best = min(w_supporters, key=lambda a: (-w_supporters[a], a))
        return {best} if w_supporters[best] > w_ego else set()
    if policy == "above_ego":
        return {a for a, w in w_supporters.items() if w > w_ego}
    if policy == "threshold":
        return {a for a, w in w_supporters.items() if w > threshold}
    raise ValueError(f"unknown selection policy {policy!r}")


def uncertainty_weight(stats: TrajectoryStats) -> float:
    """Confidence weight: high predicted occupancy up, high shadow down."""
    return ((1.0 + stats.f_o) * (1.0 + stats.p_o)) / ((1.0 + stats.f_s) * (1.0 + stats.p_s))


def fuse(
    ego_stats: list[TrajectoryStats],
    supporter_stats: dict[int, list[TrajectoryStats]],
    cfg: FusionConfig,
) -> list[float]:
    """Combine per-agent candidate scores into one fused score each.

    ``supporter_stats`` must already contain exactly the agents to fuse
    (all supporters for naive_all, the selected set otherwise). Modes:
    ego_only ignores supporters; naive_all and selective sum raw scores;
    uncertainty weights every term, the ego's included, by its
    uncertainty weight. An empty supporter map degrades every mode to
    the plain ego scores, so a round without communication always ranks
    exactly like ego_only.
    """
    n = len(ego_stats)
    for agent, stats in supporter_stats.items():
        if len(stats) != n:
            raise ValueError(f"supporter {agent} stats length != {n}")

    if cfg.mode == "ego_only" or not supporter_stats:
        return [s.score for s in ego_stats]
    participants = [ego_stats] + [supporter_stats[a] for a in sorted(supporter_stats)]
    if cfg.mode in ("naive_all", "selective"):
        return [sum(stats[i].score for stats in participants) for i in range(n)]
    if cfg.mode == "uncertainty":
        return [
            sum(uncertainty_weight(stats[i]) * stats[i].score for stats in participants)
            for i in range(n)
        ]
    raise ValueError(f"unknown fusion mode {cfg.mode!r}")


def prioritize(fused: list[float]) -> list[int]:
    """Candidate ids sorted safest-first: descending score, ties by id."""
    return sorted(range(len(fused)), key=lambda i: (-fused[i], i))


def run_round(
    ego_id: int,
    supporter_ids: list[int],
    ego_stats: list[TrajectoryStats],
    supporter_stats_fn: Callable[[int], list[TrajectoryStats]],
    cfg: FusionConfig,
    rng: np.random.Generator | None = None,
    random_one: bool = False,
    ego_pose: Pose2 | None = None,
) -> RoundLog:
    """Execute one deterministic evaluation round.

    ``supporter_stats_fn`` stands in for the supporter's local pipeline
    (transform candidates, forecast, score); it is invoked once per
    supporter in ascending id order, mirroring the fixed bus processing
    order. Supporters beyond cfg.n_available are dropped lowest-id-first.
    With ``random_one`` the selection step picks one uniformly random
    supporter (the "rand" baseline); this requires ``rng``. ``ego_pose``
    only fills the broadcast payload record.
    """
    n = len(ego_stats)
    bus = MessageBus()
    supporters = sorted(set(supporter_ids) - {ego_id})[: cfg.n_available]

    if cfg.mode == "ego_only" or not supporters:
        fused = fuse(ego_stats, {}, FusionConfig(mode="ego_only", n_available=cfg.n_available))
        return RoundLog(0, 0, fused, prioritize(fused), bus.messages)

    pose_payload = (ego_pose.x, ego_pose.y, ego_pose.theta) if ego_pose else None
    bus.send("PoseBroadcast", ego_id, BROADCAST, POSE_BYTES, pose_payload)

    all_stats: dict[int, list[TrajectoryStats]] = {}
    w_supporters: dict[int, float] = {}
    for a in supporters:
        all_stats[a] = supporter_stats_fn(a)
        w_supporters[a] = concern(all_stats[a])
        bus.send("ConcernReply", a, ego_id, CONCERN_BYTES, w_supporters[a])

    if cfg.mode == "naive_all":
        selected = set(supporters)
    elif random_one:
        if rng is None:
            raise ValueError("random_one selection requires an rng")
        selected = {supporters[int(rng.integers(len(supporters)))]}
    else:
        w_ego = concern(ego_stats)
        selected = select_supporters(w_ego, w_supporters, cfg.selection_policy, cfg.threshold)

    for a in sorted(selected):
        bus.send("ScoreRequest", ego_id, a, SCORE_REQUEST_BYTES)
        bus.send("ScoreReply", a, ego_id, score_reply_bytes(n),
                 tuple(s.as_tuple() for s in all_stats[a]))

    fused = fuse(ego_stats, {a: all_stats[a] for a in selected}, cfg)
    return RoundLog(len(selected), bus.bytes_sent, fused, prioritize(fused), bus.messages)
