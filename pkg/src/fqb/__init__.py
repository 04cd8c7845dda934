"""Face-quality / recognition-bias correlation toolkit.

Computes matcher-adaptive face image quality scores from embedding data,
evaluates verification error (FNMR at fixed FMR) per demographic or
non-demographic subgroup, and quantifies how quality assignment tracks
recognition bias via error-vs-reject curves, subgroup proportion curves,
and quality distributions.
"""

from .analysis import (
    DistributionSummary,
    ErrorRejectCurve,
    ProportionCurve,
    bias_report,
    error_vs_reject,
    proportion_vs_threshold,
    quality_distributions,
)
from .bestrowden import (
    QualityLabel,
    RegressorModel,
    predict_quality,
    quality_labels,
    train_regressor,
)
from .dataset import (
    ComparisonSet,
    Dataset,
    QualityScores,
    SampleRecord,
    generate_pairs,
    load_dataset,
    load_quality_csv,
    read_matrix,
    save_dataset,
    save_quality_csv,
    write_matrix,
)
from .errors import DataError
from .serfiq import (
    LastLayer,
    serfiq_dataset,
    serfiq_quality,
    stochastic_embeddings,
)
from .synthetic import SubgroupSpec, SynthConfig, default_config
from .verification import (
    VerificationReport,
    cosine_similarity,
    fnmr_at_threshold,
    score_pairs,
    subgroup_fnmr_table,
    threshold_at_fmr,
)

__version__ = "0.1.0"

__all__ = [
    "ComparisonSet",
    "Dataset",
    "DataError",
    "DistributionSummary",
    "ErrorRejectCurve",
    "LastLayer",
    "ProportionCurve",
    "QualityLabel",
    "QualityScores",
    "RegressorModel",
    "SampleRecord",
    "SubgroupSpec",
    "SynthConfig",
    "VerificationReport",
    "bias_report",
    "cosine_similarity",
    "default_config",
    "error_vs_reject",
    "fnmr_at_threshold",
    "generate_pairs",
    "load_dataset",
    "load_quality_csv",
    "predict_quality",
    "proportion_vs_threshold",
    "quality_distributions",
    "quality_labels",
    "read_matrix",
    "save_dataset",
    "save_quality_csv",
    "score_pairs",
    "serfiq_dataset",
    "serfiq_quality",
    "stochastic_embeddings",
    "subgroup_fnmr_table",
    "threshold_at_fmr",
    "train_regressor",
    "write_matrix",
]
