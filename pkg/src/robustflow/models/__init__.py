"""Tree-ensemble learners behind a uniform class-prediction interface.

Every trained model exposes ``predict_batch(matrix) -> list[str]`` and
``predict(row) -> str``; an attack only ever sees those predictions.
"""

from .trees import (
    DecisionTreeModel,
    Tree,
    TreeParams,
    gini_gain,
    gini_impurity,
    train_decision_tree,
)
from .forest import ForestParams, RandomForestModel, train_random_forest
from .boosting import (
    BoostModel,
    ColumnBinner,
    GossBoostParams,
    HistBoostParams,
    train_goss_gbdt,
    train_hist_gbdt,
)
from .isolation import IsolationForestModel, IsolationParams, train_isolation_forest
from .selection import (
    GridSearchResult,
    grid_search_cv,
    stratified_kfold,
    subsample_for_contamination,
)
from .io import load_model, model_from_json, model_to_json, save_model
