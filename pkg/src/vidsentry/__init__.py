"""vidsentry: sparse-anomaly judgment engine for generated videos.

Two-turn coarse-to-fine inference over a pluggable judge, verifiable
spatiotemporal rewards with saliency-discounted aggregation, group-relative
policy math, a benchmark harness, and a deterministic synthetic test world.
"""

__version__ = "0.1.0"

from .domain import (  # noqa: F401
    AnomalyAnnotation,
    AnomalyType,
    BBox,
    Basis,
    FrameSpan,
    GroundTruth,
    SaliencyLabel,
    Status,
    VideoDescriptor,
    bbox_iou,
    frame_set,
    parse_taxonomy_label,
    validate_ground_truth,
)
from .rewards import (  # noqa: F401
    DEFAULT_WEIGHTS,
    RewardBreakdown,
    RewardWeights,
    RolloutRecord,
    TurnOutcome,
    aggregate_reward,
)
