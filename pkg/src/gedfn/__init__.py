"""Graph-embedded deep feedforward networks for n << p classification."""

__version__ = "0.1.0"

from .graph_core import FeatureGraph, adjacency, all_pairs_distances, generate_ba_graph, select_predictors
from .importance import importance_scores, top_fraction
from .metrics_eval import auc, evaluate
from .neuralnet import NetworkSpec, dfn_spec, forward, gedfn_spec, init_params, predict_proba
from .synthgen import generate_dataset
from .trainer import ExperimentGrid, TrainConfig, run_grid, split, train_model

__all__ = [
    "FeatureGraph", "adjacency", "all_pairs_distances", "generate_ba_graph", "select_predictors",
    "importance_scores", "top_fraction", "auc", "evaluate", "NetworkSpec", "dfn_spec", "forward",
    "gedfn_spec", "init_params", "predict_proba", "generate_dataset", "ExperimentGrid",
    "TrainConfig", "run_grid", "split", "train_model",
]
