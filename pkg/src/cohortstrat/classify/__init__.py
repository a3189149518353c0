from .evaluation import (EvalReport, compare_feature_subsets, cross_validate, evaluate,
                         oversample, split_train_test, stratified_split_indices)
from .models import ClassifierSpec, make_model

__all__ = [
    "ClassifierSpec", "EvalReport", "compare_feature_subsets", "cross_validate", "evaluate",
    "make_model", "oversample", "split_train_test", "stratified_split_indices",
]
