from .products import (
    BEESWARM_COLUMNS,
    DEPENDENCE_COLUMNS,
    DependenceTable,
    ImportanceRow,
    ShapAttribution,
    ShapBatch,
    Waterfall,
    beeswarm_data,
    dependence_data,
    explain,
    gaussian_kde,
    global_importance,
    silverman_bandwidth,
    tree_shap,
    waterfall_local,
)
from .treeshap import expected_value, shap_values

__all__ = [
    "BEESWARM_COLUMNS",
    "DEPENDENCE_COLUMNS",
    "DependenceTable",
    "ImportanceRow",
    "ShapAttribution",
    "ShapBatch",
    "Waterfall",
    "beeswarm_data",
    "dependence_data",
    "expected_value",
    "explain",
    "gaussian_kde",
    "global_importance",
    "shap_values",
    "silverman_bandwidth",
    "tree_shap",
    "waterfall_local",
]
