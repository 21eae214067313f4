from enum import Enum
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.seeding import MAX_SEED


class SplitMode(str, Enum):
    VARIANCE_REDUCTION = "variance_reduction"
    SECOND_ORDER_GAIN = "second_order_gain"


class BoostMode(str, Enum):
    FIRST_ORDER = "first_order"
    SECOND_ORDER = "second_order"


class ModelKind(str, Enum):
    FOREST = "forest"
    GBOOST = "gboost"
    XGBOOST = "xgboost"


# CLI / file tags for each model kind
MODEL_TAGS = {"rf": ModelKind.FOREST, "gb": ModelKind.GBOOST, "xgb": ModelKind.XGBOOST}
MODEL_DISPLAY_NAMES = {
    "gb": "Gradient Boosting",
    "rf": "Random Forest",
    "xgb": "XGBoost",
}


class SplitConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    train_fraction: float = Field(
        default=0.8, gt=0.0, lt=1.0, description="Share of rows in the train split"
    )
    seed: int = Field(default=42, ge=0, le=MAX_SEED, description="Shuffle seed")


class TreeParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_depth: int = Field(default=3, ge=1, description="Maximum tree depth")
    min_samples_leaf: int = Field(default=1, ge=1, description="Minimum rows per leaf")
    features_per_split: Union[int, Literal["all"]] = Field(
        default="all", description="Features drawn at every node"
    )
    split_mode: SplitMode = Field(
        default=SplitMode.VARIANCE_REDUCTION, description="Split criterion"
    )
    second_order_lambda: float = Field(
        default=0.0, ge=0.0, description="L2 penalty on leaf weights (second order only)"
    )
    min_split_gain: float = Field(
        default=0.0, ge=0.0, description="Pruning constant subtracted from the gain"
    )

    @field_validator("features_per_split")
    @classmethod
    def validate_features_per_split(cls, v):
        if v != "all" and v < 1:
            raise ValueError("features_per_split must be >= 1 or 'all'")
        return v


class ForestParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_trees: int = Field(default=100, ge=1, description="Number of trees")
    tree: TreeParams = Field(
        default_factory=lambda: TreeParams(max_depth=12, min_samples_leaf=2)
    )
    bootstrap: bool = Field(default=True, description="Resample rows with replacement")
    seed: int = Field(default=42, ge=0, le=MAX_SEED)

    @field_validator("tree")
    @classmethod
    def validate_tree_mode(cls, v: TreeParams):
        if v.split_mode != SplitMode.VARIANCE_REDUCTION:
            raise ValueError("Forest trees use variance_reduction splits")
        return v


class BoostParams(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    n_stages: int = Field(default=100, ge=0, description="Boosting stages")
    learning_rate: float = Field(default=0.1, gt=0.0, le=1.0, description="Shrinkage")
    subsample_fraction: float = Field(
        default=1.0, gt=0.0, le=1.0, description="Row share drawn per stage"
    )
    tree: TreeParams = Field(default_factory=TreeParams)
    mode: BoostMode = Field(default=BoostMode.FIRST_ORDER)
    reg_lambda: float = Field(
        default=0.0, ge=0.0, alias="lambda", description="Leaf L2 penalty (second order)"
    )
    seed: int = Field(default=42, ge=0, le=MAX_SEED)

    def stage_tree_params(self) -> TreeParams:
        """Tree parameters actually used at each stage"""
        if self.mode == BoostMode.SECOND_ORDER:
            return self.tree.model_copy(
                update={
                    "split_mode": SplitMode.SECOND_ORDER_GAIN,
                    "second_order_lambda": self.reg_lambda,
                }
            )
        return self.tree.model_copy(
            update={"split_mode": SplitMode.VARIANCE_REDUCTION}
        )
