from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.core.config import Settings
from app.core.errors import ConfigError
from app.core.seeding import MAX_SEED, derive_seed
from app.schemas.explain import LimeConfig
from app.schemas.params import MODEL_TAGS, SplitConfig
from app.services.ingest_service import default_drop_columns


class RunConfig(BaseModel):
    """Everything one pipeline run depends on; sub-seeds derive from `seed`"""

    model_config = ConfigDict(frozen=True, protected_namespaces=())

    dataset_path: Path = Field(..., description="Telemetry CSV")
    target_column: str = Field(default="pm_power")
    source_tag: str = Field(default="custom")
    drop_columns: List[str] = Field(default_factory=list)
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    seed: int = Field(default=42, ge=0, le=MAX_SEED)
    n_jobs: int = Field(default=1)
    output_dir: Path = Field(default=Path("out"))

    model_tags: List[str] = Field(default_factory=lambda: ["rf", "gb", "xgb"])
    model_overrides: Dict[str, Dict[str, Any]] = Field(default_factory=dict)

    background_size: int = Field(default=100, ge=1)
    exact_limit: int = Field(default=14, ge=1, le=20)
    shap_permutations: int = Field(default=256, ge=1)
    summary_instances: int = Field(default=40, ge=1)
    lime_samples: int = Field(default=5000, ge=1)
    lime_kernel_factor: float = Field(default=0.75, gt=0.0)
    lime_top_k: int = Field(default=10, ge=1)
    highlight_row: Optional[int] = Field(default=None, ge=0)

    ric_whitelist: List[str] = Field(default_factory=list)
    ric_top_k: int = Field(default=3, ge=1)
    ric_explainer: Literal["lime", "shap"] = "lime"
    ric_model: str = "gb"
    ric_replay_records: int = Field(default=50, ge=0)

    svg_width: int = Field(default=900, ge=200)
    svg_height: int = Field(default=560, ge=120)

    settings: Settings = Field(default_factory=Settings, exclude=True, repr=False)

    @field_validator("dataset_path")
    @classmethod
    def validate_dataset_path(cls, v: Path):
        if not v.is_file():
            raise ValueError(f"Dataset file not found: {v}")
        return v

    @field_validator("model_tags")
    @classmethod
    def validate_model_tags(cls, v: List[str]):
        unknown = [tag for tag in v if tag not in MODEL_TAGS]
        if unknown or not v:
            raise ValueError(f"Model tags must be a non-empty subset of {sorted(MODEL_TAGS)}")
        return v

    @classmethod
    def from_settings(cls, settings: Settings, **overrides) -> "RunConfig":
        """Settings first, explicit (non-None) overrides last"""
        values = dict(
            dataset_path=Path(settings.DATASET_PATH),
            target_column=settings.TARGET_COLUMN,
            source_tag=settings.SOURCE_TAG,
            drop_columns=settings.drop_columns,
            train_fraction=settings.TRAIN_FRACTION,
            seed=settings.SEED,
            n_jobs=settings.N_JOBS,
            output_dir=Path(settings.OUTPUT_DIR),
            background_size=settings.SHAP_BACKGROUND_SIZE,
            exact_limit=settings.SHAP_EXACT_LIMIT,
            shap_permutations=settings.SHAP_PERMUTATIONS,
            summary_instances=settings.SUMMARY_INSTANCES,
            lime_samples=settings.LIME_SAMPLES,
            lime_kernel_factor=settings.LIME_KERNEL_FACTOR,
            lime_top_k=settings.LIME_TOP_K,
            highlight_row=settings.HIGHLIGHT_ROW,
            ric_whitelist=settings.ric_whitelist,
            ric_top_k=settings.RIC_TOP_K,
            ric_explainer=settings.RIC_EXPLAINER,
            ric_model=settings.RIC_MODEL,
            ric_replay_records=settings.RIC_REPLAY_RECORDS,
            svg_width=settings.SVG_WIDTH,
            svg_height=settings.SVG_HEIGHT,
            settings=settings,
        )
        values.update({key: value for key, value in overrides.items() if value is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(f"Invalid run configuration: {problems}")

    @property
    def effective_drop_columns(self) -> List[str]:
        """Explicit drop list, else the default list of the source tag"""
        if self.drop_columns:
            return list(self.drop_columns)
        return default_drop_columns(self.source_tag)

    def split_config(self) -> SplitConfig:
        return SplitConfig(train_fraction=self.train_fraction, seed=derive_seed(self.seed, "split"))

    def lime_config(self, seed: int) -> LimeConfig:
        return LimeConfig(n_samples=self.lime_samples, top_k=self.lime_top_k, seed=seed)

    def model_seed(self, tag: str) -> int:
        return derive_seed(self.seed, f"model:{tag}")
