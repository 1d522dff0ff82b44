from .evaluation import (Confusion, EvalReport, cross_validate, evaluate_metrics, grid_search, report_csv,
                         roc_auc, roc_csv, stratified_folds, thread_budget)
from .models import (DEFAULT_GRIDS, DEFAULTS, FAMILIES, ClassifierSpec, ConstantModel, Dataset, Model,
                     derive_seed, train_classifier)
from .trees import DecisionTree

__all__ = [
    "Confusion", "EvalReport", "cross_validate", "evaluate_metrics", "grid_search", "report_csv", "roc_auc",
    "roc_csv", "stratified_folds", "thread_budget", "DEFAULT_GRIDS", "DEFAULTS", "FAMILIES", "ClassifierSpec", "ConstantModel",
    "Dataset", "Model", "derive_seed", "train_classifier", "DecisionTree",
]
