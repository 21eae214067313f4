import logging
from typing import Optional, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import ValidationError

from app.core.config import Settings
from app.core.errors import EnsembleError
from app.core.seeding import derive_rng, derive_seed
from app.models.dataset import Dataset
from app.models.ensemble import EnsembleModel
from app.models.tree import RegressionTree, fit_tree, predict_tree_batch, resolve_features_per_split
from app.schemas.params import (
    MODEL_TAGS,
    BoostMode,
    BoostParams,
    ForestParams,
    ModelKind,
    TreeParams,
)
from app.schemas.report import Metrics
from app.services.ingest_service import train_size

logger = logging.getLogger(__name__)


def _fit_forest_member(
    X: np.ndarray, y: np.ndarray, params: ForestParams, index: int
) -> RegressionTree:
    # One independent stream per tree keeps the forest identical for any n_jobs
    rng = derive_rng(params.seed, "forest", index)
    if params.bootstrap:
        rows = rng.integers(0, X.shape[0], size=X.shape[0])
        return fit_tree(X[rows], y[rows], params.tree, rng)
    return fit_tree(X, y, params.tree, rng)


def mean_squared_error(predictions: np.ndarray, target: np.ndarray) -> float:
    residual = np.asarray(predictions, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(residual * residual))


class TrainingService:
    """Fits the three ensemble kinds; pure functions of (dataset, params)"""

    def __init__(self, n_jobs: int = 1):
        self.n_jobs = n_jobs

    @staticmethod
    def _check_train(train: Dataset) -> None:
        if train.n_rows < 2:
            raise EnsembleError(f"Training set too small: {train.n_rows} rows")

    def fit_forest(self, train: Dataset, params: ForestParams) -> EnsembleModel:
        """Bagged trees with per-split feature sampling"""
        self._check_train(train)
        X, y = train.rows, train.target

        with Parallel(n_jobs=self.n_jobs) as parallel:
            trees = parallel(
                delayed(_fit_forest_member)(X, y, params, index)
                for index in range(params.n_trees)
            )

        model = EnsembleModel(
            kind=ModelKind.FOREST,
            feature_names=train.feature_names,
            base_value=0.0,
            learning_rate=1.0,
            trees=tuple(trees),
            params=params,
        )
        logger.info(f"Fitted random forest: {params.n_trees} trees on {train.n_rows} rows")
        return model

    def _fit_boosting(self, train: Dataset, params: BoostParams) -> EnsembleModel:
        self._check_train(train)
        X, y = train.rows, train.target
        n = train.n_rows
        second_order = params.mode == BoostMode.SECOND_ORDER
        tree_params = params.stage_tree_params()
        # Both boosting kinds share the stream name so equal seeds draw equal subsamples
        rng = derive_rng(params.seed, "boost")

        base_value = float(np.mean(y))
        prediction = np.full(n, base_value)
        trace = [mean_squared_error(prediction, y)]
        trees = []
        n_sub = max(1, train_size(n, params.subsample_fraction))

        for stage in range(params.n_stages):
            if n_sub >= n:
                rows = np.arange(n)
            else:
                rows = np.sort(rng.choice(n, size=n_sub, replace=False))

            if second_order:
                # Squared loss 0.5*(y - f)^2: g = f - y, h = 1
                g = prediction - y
                h = np.ones(n)
                tree = fit_tree(X[rows], y[rows], tree_params, rng, gradients=(g[rows], h[rows]))
            else:
                residual = y - prediction
                tree = fit_tree(X[rows], residual[rows], tree_params, rng)

            prediction = prediction + params.learning_rate * predict_tree_batch(tree, X)
            trees.append(tree)
            trace.append(mean_squared_error(prediction, y))
            logger.debug(f"Stage {stage + 1}/{params.n_stages}: train MSE {trace[-1]:.6g}")

        kind = ModelKind.XGBOOST if second_order else ModelKind.GBOOST
        model = EnsembleModel(
            kind=kind,
            feature_names=train.feature_names,
            base_value=base_value,
            learning_rate=params.learning_rate,
            trees=tuple(trees),
            params=params,
            train_trace=tuple(trace),
        )
        logger.info(
            f"Fitted {kind.value}: {params.n_stages} stages, final train MSE {trace[-1]:.6g}"
        )
        return model

    def fit_gboost(self, train: Dataset, params: BoostParams) -> EnsembleModel:
        """Stochastic gradient boosting on squared-loss residuals"""
        if params.mode != BoostMode.FIRST_ORDER:
            raise EnsembleError("fit_gboost expects mode=first_order")
        return self._fit_boosting(train, params)

    def fit_xgboost(self, train: Dataset, params: BoostParams) -> EnsembleModel:
        """Second-order boosting with L2-regularized Newton leaf weights"""
        if params.mode != BoostMode.SECOND_ORDER:
            raise EnsembleError("fit_xgboost expects mode=second_order")
        return self._fit_boosting(train, params)

    def fit(self, tag: str, train: Dataset, params: Union[ForestParams, BoostParams]) -> EnsembleModel:
        kind = MODEL_TAGS.get(tag)
        if kind is None:
            raise EnsembleError(f"Unknown model tag: {tag}")
        if kind == ModelKind.FOREST:
            return self.fit_forest(train, params)
        if kind == ModelKind.GBOOST:
            return self.fit_gboost(train, params)
        return self.fit_xgboost(train, params)

    @staticmethod
    def evaluate(model: EnsembleModel, train: Dataset, test: Dataset) -> Metrics:
        for name, dataset in (("train", train), ("test", test)):
            if dataset.n_rows == 0:
                raise EnsembleError(f"Empty {name} set")
            if tuple(dataset.feature_names) != model.feature_names:
                raise EnsembleError(f"Schema of the {name} set does not match the model")
        return Metrics(
            train_mse=mean_squared_error(model.predict_batch(train.rows), train.target),
            test_mse=mean_squared_error(model.predict_batch(test.rows), test.target),
        )


def build_params(
    tag: str,
    settings: Settings,
    n_features: int,
    seed: Optional[int] = None,
    **overrides,
) -> Union[ForestParams, BoostParams]:
    """Model parameters from settings; overrides use the flag names of `train`"""
    seed = derive_seed(settings.SEED, f"model:{tag}") if seed is None else seed
    o = {key: value for key, value in overrides.items() if value is not None}
    try:
        return _params_for(tag, settings, n_features, seed, o)
    except ValidationError as e:
        raise EnsembleError(f"Invalid {tag} parameters: {e.errors()[0]['msg']}")
    except ValueError as e:
        raise EnsembleError(f"Invalid {tag} parameters: {e}")


def _params_for(tag: str, settings: Settings, n_features: int, seed: int, o: dict):

    if tag == "rf":
        features = o.get("features_per_split", settings.RF_FEATURES_PER_SPLIT)
        if features != "all":
            features = resolve_features_per_split(features, n_features)
        return ForestParams(
            n_trees=o.get("n_trees", settings.RF_N_TREES),
            tree=TreeParams(
                max_depth=o.get("max_depth", settings.RF_MAX_DEPTH),
                min_samples_leaf=o.get("min_samples_leaf", settings.RF_MIN_SAMPLES_LEAF),
                features_per_split=features,
            ),
            bootstrap=o.get("bootstrap", settings.RF_BOOTSTRAP),
            seed=seed,
        )

    if tag in ("gb", "xgb"):
        prefix = "GB" if tag == "gb" else "XGB"
        features = o.get("features_per_split", "all")
        if features != "all":
            features = resolve_features_per_split(features, n_features)
        return BoostParams(
            n_stages=o.get("n_stages", getattr(settings, f"{prefix}_N_STAGES")),
            learning_rate=o.get("learning_rate", getattr(settings, f"{prefix}_LEARNING_RATE")),
            subsample_fraction=o.get("subsample", getattr(settings, f"{prefix}_SUBSAMPLE")),
            tree=TreeParams(
                max_depth=o.get("max_depth", getattr(settings, f"{prefix}_MAX_DEPTH")),
                min_samples_leaf=o.get(
                    "min_samples_leaf", getattr(settings, f"{prefix}_MIN_SAMPLES_LEAF")
                ),
                features_per_split=features,
                min_split_gain=o.get(
                    "min_split_gain", settings.XGB_MIN_SPLIT_GAIN if tag == "xgb" else 0.0
                ),
            ),
            mode=BoostMode.SECOND_ORDER if tag == "xgb" else BoostMode.FIRST_ORDER,
            reg_lambda=o.get("reg_lambda", settings.XGB_LAMBDA if tag == "xgb" else 0.0),
            seed=seed,
        )

    raise EnsembleError(f"Unknown model tag: {tag}")
