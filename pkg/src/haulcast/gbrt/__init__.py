"""Gradient-boosted regression trees and exact tree Shapley attribution."""

from .shap import ShapAttribution, expected_value, summarize_shap, tree_shap, tree_shap_matrix, write_shap_csvs
from .trees import GbrtConfig, Tree, TreeEnsemble, load_ensemble, predict, save_ensemble, train_gbrt

__all__ = [
    "GbrtConfig", "Tree", "TreeEnsemble", "ShapAttribution",
    "train_gbrt", "predict", "save_ensemble", "load_ensemble",
    "tree_shap", "tree_shap_matrix", "expected_value", "summarize_shap", "write_shap_csvs",
]
