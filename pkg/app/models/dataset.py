from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.errors import DatasetError, ExplainError


def _frozen(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-named feature matrix plus the power target (watts)"""

    feature_names: Tuple[str, ...]
    rows: np.ndarray
    target: np.ndarray
    source_tag: str = "custom"
    target_name: str = "power"
    dropped_rows: int = 0

    def __post_init__(self):
        names = tuple(self.feature_names)
        rows = _frozen(self.rows)
        target = _frozen(self.target)

        if rows.ndim != 2:
            raise DatasetError("Feature matrix must be two-dimensional")
        if target.ndim != 1:
            raise DatasetError("Target must be a vector")
        if rows.shape[0] != target.shape[0]:
            raise DatasetError(
                f"Row count {rows.shape[0]} does not match target length {target.shape[0]}"
            )
        if rows.shape[1] != len(names):
            raise DatasetError(
                f"Matrix has {rows.shape[1]} columns but {len(names)} feature names"
            )
        if any(not name for name in names):
            raise DatasetError("Feature names must be non-empty")
        if len(set(names)) != len(names):
            raise DatasetError("Feature names must be unique")
        if not (np.isfinite(rows).all() and np.isfinite(target).all()):
            raise DatasetError("Dataset values must be finite")

        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "target", target)

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.rows.shape[1])

    def take(self, indices: Sequence[int]) -> "Dataset":
        """Subset of rows, in the given order"""
        index = np.asarray(indices, dtype=np.intp)
        return Dataset(
            feature_names=self.feature_names,
            rows=self.rows[index],
            target=self.target[index],
            source_tag=self.source_tag,
            target_name=self.target_name,
        )

    def same_schema(self, other: "Dataset") -> bool:
        return self.feature_names == other.feature_names

    def equals(self, other: "Dataset") -> bool:
        return (
            self.same_schema(other)
            and self.source_tag == other.source_tag
            and self.target_name == other.target_name
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.target, other.target)
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=list(self.feature_names))
        frame[self.target_name] = self.target
        return frame


@dataclass(frozen=True, eq=False)
class FeatureStats:
    """Per-feature moments (population convention), same units as the feature"""

    feature_names: Tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        for name in ("mean", "std", "minimum", "maximum"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def constant_mask(self) -> np.ndarray:
        return self.std == 0.0

    def as_rows(self) -> List[Dict[str, float]]:
        return [
            {
                "feature": name,
                "mean": float(self.mean[j]),
                "std": float(self.std[j]),
                "min": float(self.minimum[j]),
                "max": float(self.maximum[j]),
            }
            for j, name in enumerate(self.feature_names)
        ]


@dataclass(frozen=True, eq=False)
class Background:
    """Reference rows that stand in for "absent" features"""

    feature_names: Tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        rows = _frozen(self.rows)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise ExplainError("Background needs at least one row")
        if rows.shape[1] != len(self.feature_names):
            raise ExplainError("Background columns do not match its feature names")
        object.__setattr__(self, "rows", rows)

    @property
    def k(self) -> int:
        return int(self.rows.shape[0])
