"""Model-agnostic feature importance through subset refitting.

The package measures how much each feature contributes to predictive
performance by retraining models on feature subsets, with exact Shapley
attribution available as a small-p reference, plus drop-one, Rashomon
permutation, constant-replacement, and split-gain baselines for
comparison.  Simulated generators, scoring metrics, and a CLI round out
the toolkit.
"""

from ._gbt import BACKEND, available_backends
from .data import (
    DGP_IDS,
    Dataset,
    DgpSpec,
    SplitPlan,
    generate,
    load_csv,
    save_csv,
    split,
    take,
)
from .evaluation import (
    METRIC_FOR,
    ComparisonTable,
    GroundTruth,
    MethodRanks,
    angle_score,
    derive_ground_truth,
    rank_summary,
    refit_loss_table,
    selective_ratio,
    split_consistency,
)
from .external import ProtocolClient, ProtocolError
from .importance import (
    METHODS,
    FeatureDiagnostics,
    ImportanceReport,
    LocoConfig,
    MarginalRecord,
    SmssmConfig,
    constant_replacement_importance,
    gain_report,
    loco,
    mcr_simplified,
    replacement_cv,
    report_from_dict,
    report_to_dict,
    smssm,
)
from .learner import (
    MSE,
    CoalitionMask,
    FittedModel,
    LearnerSpec,
    LossMetric,
    baseline_cv_loss,
    cv_loss,
    fit,
    gain_importance,
    predict,
    release,
)
from .shapley import (
    Game,
    ShapleyVector,
    coverage_probability,
    exact_shapley,
    filtered_value,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "available_backends",
    "DGP_IDS",
    "Dataset",
    "DgpSpec",
    "SplitPlan",
    "generate",
    "load_csv",
    "save_csv",
    "split",
    "take",
    "METRIC_FOR",
    "ComparisonTable",
    "GroundTruth",
    "MethodRanks",
    "angle_score",
    "derive_ground_truth",
    "rank_summary",
    "refit_loss_table",
    "selective_ratio",
    "split_consistency",
    "ProtocolClient",
    "ProtocolError",
    "METHODS",
    "FeatureDiagnostics",
    "ImportanceReport",
    "LocoConfig",
    "MarginalRecord",
    "SmssmConfig",
    "constant_replacement_importance",
    "gain_report",
    "loco",
    "mcr_simplified",
    "replacement_cv",
    "report_from_dict",
    "report_to_dict",
    "smssm",
    "MSE",
    "CoalitionMask",
    "FittedModel",
    "LearnerSpec",
    "LossMetric",
    "baseline_cv_loss",
    "cv_loss",
    "fit",
    "gain_importance",
    "predict",
    "release",
    "Game",
    "ShapleyVector",
    "coverage_probability",
    "exact_shapley",
    "filtered_value",
    "__version__",
]
