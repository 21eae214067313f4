from dataclasses import dataclass, field
from typing import Iterator, Tuple, Union

import numpy as np

from app.core.errors import EnsembleError
from app.models.tree import RegressionTree, predict_tree_batch
from app.schemas.params import BoostParams, ForestParams, ModelKind


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """Fitted forest or boosted ensemble sharing one prediction contract.

    forest:   f(x) = mean_t tree_t(x)               (base_value unused)
    boosting: f(x) = base_value + rate * sum_t tree_t(x)
    """

    kind: ModelKind
    feature_names: Tuple[str, ...]
    base_value: float
    learning_rate: float
    trees: Tuple[RegressionTree, ...]
    params: Union[ForestParams, BoostParams]
    train_trace: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "train_trace", tuple(float(v) for v in self.train_trace))
        if self.kind == ModelKind.FOREST and not self.trees:
            raise EnsembleError("A forest needs at least one tree")
        for tree in self.trees:
            if tree.n_features != self.n_features:
                raise EnsembleError("Tree dimension does not match the model schema")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def is_boosted(self) -> bool:
        return self.kind != ModelKind.FOREST

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise EnsembleError(
                f"Expected rows with {self.n_features} features, got shape {X.shape}"
            )
        return X

    def tree_sum(self, X: np.ndarray) -> np.ndarray:
        """Sum of member tree outputs, accumulated in tree order"""
        X = self._check(X)
        total = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:
            total += predict_tree_batch(tree, X)
        return total

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        total = self.tree_sum(X)
        if self.kind == ModelKind.FOREST:
            return total / len(self.trees)
        return self.base_value + self.learning_rate * total

    def staged_predict_batch(self, X: np.ndarray) -> Iterator[np.ndarray]:
        """Boosting predictions after 0, 1, ..., n_stages stages"""
        if not self.is_boosted:
            raise EnsembleError("Staged prediction is defined for boosted models only")
        X = self._check(X)
        total = np.zeros(X.shape[0], dtype=np.float64)
        yield np.full(X.shape[0], self.base_value)
        for tree in self.trees:
            total += predict_tree_batch(tree, X)
            yield self.base_value + self.learning_rate * total


def predict(model: EnsembleModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise EnsembleError(
            f"Expected a vector of {model.n_features} features, got shape {x.shape}"
        )
    return float(model.predict_batch(x[None, :])[0])
