"""Ground-truth-free selection of the best CATE estimator from a candidate set."""

from .datagen import (
    COMPETITIVE_PLUS_INFERIOR_SPECS,
    NEAR_TIED_SPECS,
    CandidateSet,
    Dataset,
    NoiseSpec,
    Observation,
    ToyGroundTruth,
    generate_toy,
    ingest_dataset,
    ingest_predictions,
    make_candidates,
    population_relative_error,
)
from .harness import (
    CltReport,
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    StabilityReport,
    clt_diagnostic,
    load_experiment_config,
    register_selector,
    run_experiment,
    stability_diagnostic,
    sweep,
)
from .nuisance import (
    NuisanceConfig,
    NuisanceModel,
    OracleNuisance,
    fit,
    predict,
    stability_probe,
    stability_probe_mixed,
)
from .scores import (
    CovarianceEstimate,
    DeltaVector,
    ScoreTensor,
    build_score_tensor,
    cov_hat,
    delta_hat,
    pair_score,
    pseudo_outcome,
)
from .selectors import (
    SelectionResult,
    SelectorConfig,
    SplitPlan,
    bonferroni_select,
    exp_weights,
    naive_critical_value,
    naive_select,
    proposed_select,
    single_layer_ablation_select,
    two_way_split,
)

__version__ = "0.1.0"

__all__ = [
    "COMPETITIVE_PLUS_INFERIOR_SPECS",
    "NEAR_TIED_SPECS",
    "CandidateSet",
    "CltReport",
    "ConfigError",
    "CovarianceEstimate",
    "Dataset",
    "DeltaVector",
    "ExperimentConfig",
    "ExperimentReport",
    "NoiseSpec",
    "NuisanceConfig",
    "NuisanceModel",
    "Observation",
    "OracleNuisance",
    "ScoreTensor",
    "SelectionResult",
    "SelectorConfig",
    "SplitPlan",
    "StabilityReport",
    "ToyGroundTruth",
    "bonferroni_select",
    "build_score_tensor",
    "clt_diagnostic",
    "cov_hat",
    "delta_hat",
    "exp_weights",
    "fit",
    "generate_toy",
    "ingest_dataset",
    "ingest_predictions",
    "load_experiment_config",
    "make_candidates",
    "naive_critical_value",
    "naive_select",
    "pair_score",
    "population_relative_error",
    "predict",
    "proposed_select",
    "pseudo_outcome",
    "register_selector",
    "run_experiment",
    "single_layer_ablation_select",
    "stability_diagnostic",
    "stability_probe",
    "stability_probe_mixed",
    "sweep",
    "two_way_split",
]
