from pathlib import Path
from typing import List, Optional

from pydantic_settings import BaseSettings

from app.core.errors import ConfigError


def split_csv(value: str) -> List[str]:
    """Split a comma-separated setting into trimmed, non-empty names"""
    return [item.strip() for item in value.split(",") if item.strip()]


class Settings(BaseSettings):
    # App Settings
    APP_NAME: str = "WattLens"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Dataset
    DATASET_PATH: str = "data/dataset_dlul.csv"
    TARGET_COLUMN: str = "pm_power"
    SOURCE_TAG: str = "dlul"
    # Empty means "use the defaults of SOURCE_TAG"
    DROP_COLUMNS: str = ""
    TRAIN_FRACTION: float = 0.8

    # Reproducibility & Execution
    SEED: int = 42
    N_JOBS: int = 1
    OUTPUT_DIR: str = "out"

    # Random Forest
    RF_N_TREES: int = 100
    RF_MAX_DEPTH: int = 12
    RF_MIN_SAMPLES_LEAF: int = 2
    # "auto" resolves to max(1, d // 3) once the feature count is known
    RF_FEATURES_PER_SPLIT: str = "auto"
    RF_BOOTSTRAP: bool = True

    # Gradient Boosting
    GB_N_STAGES: int = 100
    GB_LEARNING_RATE: float = 0.1
    GB_MAX_DEPTH: int = 3
    GB_MIN_SAMPLES_LEAF: int = 1
    GB_SUBSAMPLE: float = 1.0

    # Second-order (XGBoost-style) Boosting
    XGB_N_STAGES: int = 100
    XGB_LEARNING_RATE: float = 0.1
    XGB_MAX_DEPTH: int = 6
    XGB_MIN_SAMPLES_LEAF: int = 1
    XGB_SUBSAMPLE: float = 1.0
    XGB_LAMBDA: float = 1.0
    XGB_MIN_SPLIT_GAIN: float = 0.0

    # Shapley
    SHAP_BACKGROUND_SIZE: int = 100
    SHAP_EXACT_LIMIT: int = 14
    SHAP_PERMUTATIONS: int = 256
    SUMMARY_INSTANCES: int = 40

    # LIME
    LIME_SAMPLES: int = 5000
    LIME_KERNEL_FACTOR: float = 0.75
    LIME_TOP_K: int = 10
    HIGHLIGHT_ROW: Optional[int] = None

    # RIC Loop
    RIC_WHITELIST: str = "airtime,selected_airtime,nRBs,selected_mcs"
    RIC_TOP_K: int = 3
    RIC_EXPLAINER: str = "lime"
    RIC_MODEL: str = "gb"
    RIC_REPLAY_RECORDS: int = 50
    RIC_LISTEN: str = "127.0.0.1:8000"
    RIC_MODEL_PATH: Optional[str] = None
    RIC_DATA_PATH: Optional[str] = None

    # Rendering
    SVG_WIDTH: int = 900
    SVG_HEIGHT: int = 560

    class Config:
        env_file = ".env"
        case_sensitive = True

    @property
    def drop_columns(self) -> List[str]:
        return split_csv(self.DROP_COLUMNS)

    @property
    def ric_whitelist(self) -> List[str]:
        return split_csv(self.RIC_WHITELIST)


def load_settings(config_path: Optional[str] = None) -> Settings:
    """Build settings from the environment and an optional KEY=value file"""
    if config_path is None:
        return Settings()
    if not Path(config_path).is_file():
        raise ConfigError(f"Config file not found: {config_path}")
    return Settings(_env_file=config_path)


settings = Settings()
