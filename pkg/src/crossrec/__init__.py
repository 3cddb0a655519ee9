"""crossrec: learning to recommend purchases that happen outside browsing sessions.

Users research insurance products over several short website sessions and
then buy through another channel. This package segments session streams
into purchase tasks, trains recurrent cross-session recommenders (binary
cross-entropy, censored Weibull time-to-purchase, additive attention,
demographic hybrids) next to classical baselines, and evaluates them with
a shared post-filtered top-k ranking protocol.
"""

from .dataio import (
    Action,
    ActionVocabulary,
    Catalog,
    DataError,
    Dataset,
    PurchaseEvent,
    Session,
    UserProfile,
    eligibility_mask,
    ingest,
)
from .evaluation import (
    ABLATION_FACETS,
    METRICS,
    EvalReport,
    ablate_actions,
    apply_post_filter,
    evaluate,
    group_breakdown,
    metrics_at_k,
    per_step_curve,
    rank_items,
    shuffle_study,
    threshold_sweep,
)
from .numcore.train import FitHistory, TrainConfig, fit
from .prep import PrepConfig, PrepResult, Split, run_pipeline
from .recmodels import (
    CrossSessionsModel,
    extract_attention,
    load_model,
    predict_steps,
    recommend,
    save_model,
    train_model,
)
from .segmentation import Gmm2, Task, TaskThreshold, estimate_threshold, fit_gmm_em, segment_all
from .synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionVocabulary",
    "Catalog",
    "CrossSessionsModel",
    "DataError",
    "Dataset",
    "EvalReport",
    "FitHistory",
    "Gmm2",
    "METRICS",
    "ABLATION_FACETS",
    "PrepConfig",
    "PrepResult",
    "PurchaseEvent",
    "Session",
    "Split",
    "SynthConfig",
    "Task",
    "TaskThreshold",
    "TrainConfig",
    "UserProfile",
    "ablate_actions",
    "apply_post_filter",
    "eligibility_mask",
    "estimate_threshold",
    "evaluate",
    "extract_attention",
    "fit",
    "fit_gmm_em",
    "generate",
    "group_breakdown",
    "ingest",
    "load_model",
    "metrics_at_k",
    "per_step_curve",
    "predict_steps",
    "rank_items",
    "recommend",
    "run_pipeline",
    "save_model",
    "segment_all",
    "shuffle_study",
    "threshold_sweep",
    "train_model",
    "__version__",
]
