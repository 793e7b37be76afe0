"""Classify natural-language software requirements against quality properties.

reqqual judges whether a requirement statement is singular, complete,
appropriate, and correct by running small recurrent networks (LSTM or
GRU, implemented from scratch on numpy) over its part-of-speech tag
sequence.  The package covers the whole pipeline: labeled synthetic
dataset generation, tokenization and rule-based tagging, training with
hand-derived backpropagation through time and Adam, k-fold
cross-validation, hyperparameter search, a deterministic binary model
format, and a command-line interface (`reqqual`).
"""

from .artifact import ModelArtifact, load_model, save_model
from .corpus import (
    PROPERTIES,
    Dataset,
    FoldPlan,
    PropertyName,
    Requirement,
    SignalPlan,
    derive_labels,
    generate_synthetic,
    holdout_split,
    load_dataset,
    make_folds,
    save_dataset,
    threeway_split,
)
from .errors import (
    ArtifactError,
    DatasetError,
    ParameterError,
    ReqqualError,
    StructuralError,
    TrainingError,
)
from .evaluation import (
    Confusion,
    CvResult,
    HoldoutResult,
    Metrics,
    classify,
    compute_metrics,
    cross_validate,
    evaluate_model,
    holdout_evaluate,
)
from .nn import (
    CellType,
    ModelConfig,
    ParameterSet,
    RunMode,
    backward,
    backward_batch,
    forward,
    forward_batch,
    gru_step,
    lstm_step,
)
from .numcore import Rng, sigmoid, softmax
from .search import (
    Candidate,
    SearchReport,
    SearchSpace,
    SearchTrial,
    enumerate_space,
    preset_candidate,
    preset_config,
    run_search,
)
from .textpipe import (
    TAGSET,
    EncodedSequence,
    RulesTagger,
    TaggerMode,
    TagVocabulary,
    Token,
    build_vocabulary,
    decode,
    encode,
    encode_text,
    tag_text,
    tokenize,
)
from .train import (
    AdamState,
    GradCheckReport,
    LossCurve,
    TrainConfig,
    adam_update,
    clip_gradients,
    fit,
    gradient_check,
    loss,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "AdamState",
    "Candidate",
    "CellType",
    "Confusion",
    "CvResult",
    "Dataset",
    "DatasetError",
    "EncodedSequence",
    "FoldPlan",
    "GradCheckReport",
    "HoldoutResult",
    "LossCurve",
    "Metrics",
    "ModelArtifact",
    "ModelConfig",
    "PROPERTIES",
    "ParameterError",
    "ParameterSet",
    "PropertyName",
    "ReqqualError",
    "Requirement",
    "Rng",
    "RulesTagger",
    "RunMode",
    "SearchReport",
    "SearchSpace",
    "SearchTrial",
    "SignalPlan",
    "StructuralError",
    "TAGSET",
    "TagVocabulary",
    "TaggerMode",
    "Token",
    "TrainConfig",
    "TrainingError",
    "adam_update",
    "backward",
    "backward_batch",
    "build_vocabulary",
    "classify",
    "clip_gradients",
    "compute_metrics",
    "cross_validate",
    "decode",
    "derive_labels",
    "encode",
    "encode_text",
    "enumerate_space",
    "evaluate_model",
    "fit",
    "forward",
    "forward_batch",
    "generate_synthetic",
    "gradient_check",
    "gru_step",
    "holdout_evaluate",
    "holdout_split",
    "load_dataset",
    "load_model",
    "loss",
    "lstm_step",
    "make_folds",
    "preset_candidate",
    "preset_config",
    "run_search",
    "save_dataset",
    "save_model",
    "sigmoid",
    "softmax",
    "tag_text",
    "threeway_split",
    "tokenize",
    "__version__",
]
