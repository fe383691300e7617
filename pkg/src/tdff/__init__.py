"""Template-based face matching on precomputed embeddings.

Two-stage fusion (feature concatenation, then score ensembling), class-balanced
template-specific linear SVMs, one-shot similarity, and IJB-A style metrics.
"""

from .core import (
    MediaEncoding,
    MediaKind,
    MediaRecord,
    ProtocolSplit,
    SplitRole,
    TdffError,
    Template,
    validate_dataset,
)
from .evaluation import aggregate_splits, cmc_curve, open_set_metrics, tar_at_far
from .fusion import FeatureStreamSpec, build_template, concat_streams, l2_normalize, pool_video
from .scoring import FusionConfig, fuse_scores, oss_score, score_template_pair
from .svm import (
    NegativeRole,
    SolverConfig,
    SvmModel,
    TrainingProblem,
    build_negative_set,
    class_weights,
    decision_value,
    train_template_svm,
)
from .synth import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"
