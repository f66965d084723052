"""Normalisation, splitting and the RF / SVM / KNN / NB classifier bench."""

from .bench import BenchResult, PairScore, PairSearchResult, class_order, pairwise_feature_search, run_bench
from .data import MLError, Normalizer, Split, SplitSpec, split_indices, stratified_split, zscore_apply, zscore_fit
from .models import (
    ConfusionMatrix,
    ModelKind,
    ModelSpec,
    TrainedModel,
    default_specs,
    evaluate,
    predict,
    train,
)

__all__ = [
    "BenchResult", "ConfusionMatrix", "MLError", "ModelKind", "ModelSpec", "Normalizer", "PairScore",
    "PairSearchResult", "Split", "SplitSpec", "TrainedModel", "class_order", "default_specs", "evaluate",
    "pairwise_feature_search", "predict", "run_bench", "split_indices", "stratified_split", "train",
    "zscore_apply", "zscore_fit",
]
