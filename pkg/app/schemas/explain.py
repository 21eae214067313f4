from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from app.core.seeding import MAX_SEED


class ExplainMethod(str, Enum):
    SHAP_EXACT = "shap_exact"
    SHAP_SAMPLED = "shap_sampled"
    LIME = "lime"


class Attribution(BaseModel):
    """Per-feature contributions (watts) for one instance"""

    feature_names: List[str] = Field(..., description="Feature names in model order")
    phi: List[float] = Field(..., description="Contribution of every feature [W]")
    base_value: float = Field(..., description="Expected prediction over the reference [W]")
    prediction: float = Field(..., description="Model output at the instance [W]")
    method: ExplainMethod = Field(..., description="Explanation method")
    feature_values: List[float] = Field(..., description="Raw feature values of the instance")
    seed: Optional[int] = Field(None, ge=0, le=MAX_SEED, description="Sampling seed")
    coefficients: Optional[List[float]] = Field(
        None, description="LIME surrogate slopes per feature unit"
    )
    intercept: Optional[float] = Field(None, description="LIME surrogate intercept")
    regularized: bool = Field(
        default=False, description="Surrogate solve needed ridge stabilization"
    )

    @model_validator(mode="after")
    def check_lengths(self):
        d = len(self.feature_names)
        if d == 0:
            raise ValueError("Attribution needs at least one feature")
        if len(self.phi) != d or len(self.feature_values) != d:
            raise ValueError("phi and feature_values must match feature_names")
        if self.coefficients is not None and len(self.coefficients) != d:
            raise ValueError("coefficients must match feature_names")
        return self

    def phi_array(self) -> np.ndarray:
        return np.asarray(self.phi, dtype=np.float64)

    def ranked(self) -> List[Tuple[str, float, float]]:
        """(name, phi, value) sorted by |phi| descending, then by name"""
        items = zip(self.feature_names, self.phi, self.feature_values)
        return sorted(items, key=lambda item: (-abs(item[1]), item[0]))

    def positive(self) -> List[Tuple[str, float]]:
        return [(name, phi) for name, phi, _ in self.ranked() if phi > 0]

    def negative(self) -> List[Tuple[str, float]]:
        return [(name, phi) for name, phi, _ in self.ranked() if phi < 0]


class LimeConfig(BaseModel):
    n_samples: int = Field(default=5000, ge=1, description="Perturbations drawn")
    kernel_width: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="Kernel width in standardized units; None means 0.75 * sqrt(d)",
    )
    top_k: int = Field(default=10, ge=1, description="Features kept in the explanation")
    seed: int = Field(default=42, ge=0, le=MAX_SEED)

    def width_for(self, n_features: int, factor: float = 0.75) -> float:
        if self.kernel_width is not None:
            return self.kernel_width
        return factor * float(np.sqrt(n_features))


class SummaryFeature(BaseModel):
    name: str
    feature_values: List[float]
    attributions: List[float]
    mean_abs: float = Field(..., ge=0.0)


class GlobalSummary(BaseModel):
    """Per-feature (value, attribution) pairs, features by mean |phi| descending"""

    features: List[SummaryFeature]
    n_instances: int = Field(..., ge=1)
    base_value: float
    methods: List[ExplainMethod] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_shape(self):
        if not self.features:
            raise ValueError("Summary needs at least one feature")
        for feature in self.features:
            if len(feature.feature_values) != self.n_instances:
                raise ValueError(f"Feature '{feature.name}' has the wrong number of values")
            if len(feature.attributions) != self.n_instances:
                raise ValueError(f"Feature '{feature.name}' has the wrong number of attributions")
        return self

    @property
    def feature_names(self) -> List[str]:
        return [feature.name for feature in self.features]


class LimeStability(BaseModel):
    """Spread of LIME contributions across sampling seeds"""

    feature_names: List[str]
    seeds: List[int] = Field(..., min_length=1)
    mean_phi: List[float] = Field(..., description="Mean contribution per feature [W]")
    std_phi: List[float] = Field(..., description="Population std of contributions [W]")
    top_k_frequency: List[float] = Field(
        ..., description="Fraction of runs with the feature among the kept top_k"
    )

    def unstable(self, threshold: float = 0.5) -> List[str]:
        """Features kept in some runs but in fewer than `threshold` of them"""
        return [
            name
            for name, freq in zip(self.feature_names, self.top_k_frequency)
            if 0.0 < freq < threshold
        ]
