import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.core.errors import DatasetError
from app.core.seeding import derive_rng, make_rng
from app.models.dataset import Dataset, FeatureStats
from app.schemas.params import SplitConfig

logger = logging.getLogger(__name__)

# Timestamp and configuration-label columns of the measurement datasets
DEFAULT_DROP_COLUMNS = {
    "ul": ["date", "timestamp", "cpu_platform", "tm", "mode", "bw"],
    "dlul": ["date", "timestamp", "cpu_platform", "tm", "mode", "bw"],
}


def default_drop_columns(source_tag: str) -> List[str]:
    return list(DEFAULT_DROP_COLUMNS.get(source_tag, []))


def load_dataset(
    path: Union[str, Path],
    target_column: str,
    drop_columns: Optional[Sequence[str]] = None,
    source_tag: str = "custom",
) -> Dataset:
    """Load a telemetry CSV into a Dataset.

    Rows with a missing or non-numeric value in any retained column are
    dropped (not imputed); `Dataset.dropped_rows` records how many.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Dataset file not found: {path}")

    try:
        frame = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DatasetError(f"Dataset file has no header row: {path}")
    except (UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DatasetError(f"Cannot parse {path}: {e}")

    frame.columns = [str(c).strip() for c in frame.columns]
    if target_column not in frame.columns:
        raise DatasetError(f"Target column '{target_column}' not in header of {path}")

    drop = [c for c in (drop_columns or []) if c != target_column]
    missing = [c for c in drop if c not in frame.columns]
    if missing:
        logger.debug(f"Drop columns absent from {path.name}: {missing}")
    frame = frame.drop(columns=[c for c in drop if c in frame.columns])

    feature_names = [c for c in frame.columns if c != target_column]
    if not feature_names:
        raise DatasetError("No feature columns left after dropping")

    numeric = frame.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    numeric = numeric.replace([np.inf, -np.inf], np.nan)
    usable = numeric.notna().all(axis=1)
    dropped = int((~usable).sum())

    if not usable.any():
        hopeless = [c for c in numeric.columns if numeric[c].isna().all()]
        hint = f"; entirely non-numeric columns: {hopeless}" if hopeless else ""
        raise DatasetError(f"No usable rows in {path} after filtering{hint}")

    kept = numeric[usable]
    if dropped:
        logger.info(f"Dropped {dropped} rows with missing or non-numeric values from {path.name}")

    dataset = Dataset(
        feature_names=tuple(feature_names),
        rows=kept[feature_names].to_numpy(dtype=np.float64),
        target=kept[target_column].to_numpy(dtype=np.float64),
        source_tag=source_tag,
        target_name=target_column,
        dropped_rows=dropped,
    )
    logger.info(
        f"Loaded {dataset.n_rows} rows x {dataset.n_features} features from {path.name}"
    )
    return dataset


def train_size(n_rows: int, train_fraction: float) -> int:
    """round(train_fraction * n), halves rounded up"""
    return int(np.floor(train_fraction * n_rows + 0.5))


def split(dataset: Dataset, config: SplitConfig) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first round(f*n) rows train and the rest test"""
    n = dataset.n_rows
    if n < 2:
        raise DatasetError(f"too few rows to split: {n}")
    n_train = train_size(n, config.train_fraction)
    if n_train == 0 or n_train == n:
        raise DatasetError(
            f"Split of {n} rows at fraction {config.train_fraction} leaves one side empty"
        )

    order = make_rng(config.seed).permutation(n)
    train = dataset.take(order[:n_train])
    test = dataset.take(order[n_train:])
    logger.info(f"Split {n} rows into {train.n_rows} train / {test.n_rows} test")
    return train, test


def compute_stats(dataset: Dataset) -> FeatureStats:
    if dataset.n_rows == 0:
        raise DatasetError("Cannot compute statistics of an empty dataset")
    rows = dataset.rows
    minimum = rows.min(axis=0)
    maximum = rows.max(axis=0)
    mean = np.clip(rows.mean(axis=0), minimum, maximum)
    std = rows.std(axis=0)
    std[minimum == maximum] = 0.0
    return FeatureStats(
        feature_names=dataset.feature_names,
        mean=mean,
        std=std,
        minimum=minimum,
        maximum=maximum,
    )


def sample_rows(dataset: Dataset, k: int, seed: int, module: str) -> np.ndarray:
    """Uniform sample of k row indices without replacement (all rows if k >= n)"""
    if k >= dataset.n_rows:
        return np.arange(dataset.n_rows)
    rng = derive_rng(seed, module)
    return np.sort(rng.choice(dataset.n_rows, size=k, replace=False))


# Two levels per configuration knob; every feature follows exactly one knob
SYNTHETIC_KNOBS = ("airtime", "selected_airtime", "bsr", "gput", "mcs", "txgain", "channel")
SYNTHETIC_LEVELS = {
    "airtime": ("airtime", (0.45, 0.95)),
    "selected_airtime": ("selected_airtime", (0.35, 0.85)),
    "selected_mcs": ("mcs", (9.0, 23.0)),
    "thr": ("mcs", (8.5, 26.0)),
    "gput": ("gput", (6.0, 22.0)),
    "bler": ("channel", (0.01, 0.09)),
    "bsr": ("bsr", (800.0, 5200.0)),
    "txgain": ("txgain", (60.0, 85.0)),
}
SYNTHETIC_CELL_LEVELS = {
    "nRBs": ("selected_airtime", (17.0, 43.0)),
    "dec_time": ("mcs", (112.0, 224.0)),
    "turbodec_it": ("channel", (1.4, 2.8)),
    "clockspeed": ("channel", (2.4, 3.0)),
}
# Downlink levels relative to uplink
DL_SCALE = {"airtime": 0.9, "selected_airtime": 0.9, "thr": 1.6, "gput": 1.6, "bsr": 2.5}
MAIN_EFFECTS = np.array([2.0, 1.6, 1.4, 1.2, 0.35, 0.2, 0.15])


def generate_synthetic(variant: str = "dlul", n_rows: int = 2000, seed: int = 42) -> pd.DataFrame:
    """Synthetic vBS measurement table with a known power function.

    Every row is one measurement of a configuration sweep: seven two-level
    knobs are drawn per row and each telemetry column is a fixed function of
    exactly one knob, so rows sharing a configuration share their features
    and differ only in the measured power. The airtime, selected airtime,
    buffer and goodput knobs dominate power. On top of the main effects,
    power carries a four-way interaction of those knobs and a small
    seven-way interaction of all of them; clockspeed follows the channel
    knob and carries nothing of its own.
    """
    if variant not in ("ul", "dlul"):
        raise DatasetError(f"Unknown synthetic variant: {variant}")
    if n_rows < 2:
        raise DatasetError("Synthetic dataset needs at least 2 rows")

    rng = derive_rng(seed, "synthetic", 0 if variant == "ul" else 1)
    knobs = rng.integers(0, 2, size=(n_rows, len(SYNTHETIC_KNOBS)))
    level = dict(zip(SYNTHETIC_KNOBS, knobs.T))
    signs = 2.0 * knobs - 1.0

    columns = {}
    links = ["ul"] if variant == "ul" else ["ul", "dl"]
    for link in links:
        suffix = "" if variant == "ul" else f"_{link}"
        for name, (knob, values) in SYNTHETIC_LEVELS.items():
            scale = DL_SCALE.get(name, 1.0) if link == "dl" else 1.0
            columns[f"{name}{suffix}"] = scale * np.asarray(values)[level[knob]]
    for name, (knob, values) in SYNTHETIC_CELL_LEVELS.items():
        columns[name] = np.asarray(values)[level[knob]]

    power = 14.0 + signs @ MAIN_EFFECTS
    power += 0.4 * np.prod(signs[:, :4], axis=1)
    power += 0.2 * np.prod(signs, axis=1)
    power += rng.normal(0.0, 0.05, n_rows)

    frame = pd.DataFrame(columns)
    frame.insert(0, "date", pd.date_range("2022-01-01", periods=n_rows, freq="s").astype(str))
    frame.insert(1, "cpu_platform", rng.choice(["i7-8700K", "i9-9900K"], n_rows))
    frame["pm_power"] = power
    return frame


def write_synthetic(path: Union[str, Path], variant: str, n_rows: int, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    generate_synthetic(variant, n_rows, seed).to_csv(path, index=False, float_format="%.10g")
    logger.info(f"Wrote synthetic {variant} dataset ({n_rows} rows) to {path}")
    return path


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_frame().to_csv(path, index=False, float_format="%.17g")
    return path
