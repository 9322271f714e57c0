"""fitforge: personalized workout recommendations from wearable sensor histories.

The package learns user and route-category embeddings from historical
workout records via CP tensor factorization, trains an MLP that maps a
target caloric expenditure to a required workout distance, and trains a
stacked bidirectional LSTM that maps a chosen route profile to per-step
speed and heart-rate sequences.  A versioned model bundle, a CLI, and an
HTTP inference service tie the pieces together.
"""

__version__ = "0.1.0"

from .data import (
    CleaningReport,
    CleaningRules,
    DatasetSplit,
    NormStats,
    SyntheticConfig,
    WorkoutRecord,
    augment_route,
    clean,
    generate_synthetic,
    parse_records,
    split_and_normalize,
    write_records,
)
from .tensor import cp_als, core_consistency, cosine_similarity, khatri_rao, rank_sweep, tucker_core

__all__ = [
    "CleaningReport",
    "CleaningRules",
    "DatasetSplit",
    "NormStats",
    "SyntheticConfig",
    "WorkoutRecord",
    "augment_route",
    "clean",
    "core_consistency",
    "cosine_similarity",
    "cp_als",
    "generate_synthetic",
    "khatri_rao",
    "parse_records",
    "rank_sweep",
    "split_and_normalize",
    "tucker_core",
    "write_records",
]
