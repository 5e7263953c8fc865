from .gbdt import Tree, TreeEnsemble, grow_tree, train_gbdt
from .logistic import LogisticModel, sigmoid, train_logistic
from .model_io import load_model, save_model
from .search import (
    GBDT_DEPTHS,
    GBDT_LEARNING_RATES,
    LOGISTIC_LAMBDAS,
    TrainConfig,
    choose_decision_threshold,
    grid_search,
    predict_margin,
    predict_proba,
    predictor_count_sweep,
)

__all__ = [
    "GBDT_DEPTHS",
    "GBDT_LEARNING_RATES",
    "LOGISTIC_LAMBDAS",
    "LogisticModel",
    "Tree",
    "TreeEnsemble",
    "TrainConfig",
    "choose_decision_threshold",
    "grid_search",
    "grow_tree",
    "load_model",
    "predict_margin",
    "predict_proba",
    "predictor_count_sweep",
    "save_model",
    "sigmoid",
    "train_gbdt",
    "train_logistic",
]
