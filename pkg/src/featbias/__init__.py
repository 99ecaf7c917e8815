"""Synthetic imbalanced data, penalized logistic regression and forest importances.

The subpackages follow the workflow: :mod:`datagen` builds datasets with set
imbalances and odds ratios, :mod:`glm` and :mod:`penalized` fit logistic
models, :mod:`forest` grows forests and scores importances, :mod:`bench`
runs the simulation protocols and :mod:`audit` applies them to real data.
"""
__version__ = "0.1.0"

from .datagen import (ContingencySpec, ContinuousFeatureSpec, Dataset, DatasetSpec, cell_probabilities,  # noqa: E402
                      paper_grid, sample_dataset)
from .glm import DesignMatrix, FitResult, confidence_intervals, fit_ml  # noqa: E402
from .penalized import LogFConfig, NetConfig, cv_tune, fit_firth, fit_logf, fit_net  # noqa: E402
from .forest import ForestConfig, ImportanceReport, fit_forest, importance, rank_and_detect  # noqa: E402

__all__ = [
    "ContingencySpec", "ContinuousFeatureSpec", "Dataset", "DatasetSpec", "DesignMatrix", "FitResult",
    "ForestConfig", "ImportanceReport", "LogFConfig", "NetConfig", "cell_probabilities", "confidence_intervals",
    "cv_tune", "fit_firth", "fit_forest", "fit_logf", "fit_ml", "fit_net", "importance", "paper_grid",
    "rank_and_detect", "sample_dataset",
]
