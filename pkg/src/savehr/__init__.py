"""Self-attentive EHR risk model, baselines, cohort tooling and evaluation."""

from .cohort import (
    CohortSpec,
    ConfigError,
    FormatError,
    GeneratorConfig,
    PatientTensor,
    PopulationShift,
    StratificationError,
    build_vocab,
    enroll,
    extract_all,
    extract_tensor,
    find_index_date,
    generate_population,
    split_cohort,
)
from .metrics import UndefinedMetricError, auc_pr, auc_roc, cross_validate
from .model import ModelConfig, SavehrModel, VocabularyError, predict, train
from .training import TrainHyper, TrainingError

__all__ = [
    "CohortSpec",
    "ConfigError",
    "FormatError",
    "GeneratorConfig",
    "ModelConfig",
    "PatientTensor",
    "PopulationShift",
    "SavehrModel",
    "StratificationError",
    "TrainHyper",
    "TrainingError",
    "UndefinedMetricError",
    "VocabularyError",
    "auc_pr",
    "auc_roc",
    "build_vocab",
    "cross_validate",
    "enroll",
    "extract_all",
    "extract_tensor",
    "find_index_date",
    "generate_population",
    "predict",
    "split_cohort",
    "train",
]
