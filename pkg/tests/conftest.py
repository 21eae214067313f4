import numpy as np
import pytest
import pytest_asyncio
from httpx import ASGITransport, AsyncClient

from app.api.deps import get_ric_session
from app.core.seeding import make_rng
from app.main import app
from app.models.dataset import Dataset
from app.schemas.params import BoostMode, BoostParams, ForestParams, TreeParams
from app.schemas.run import RunConfig
from app.services.ingest_service import compute_stats, write_synthetic
from app.services.ric_service import RicSession, reference_data
from app.services.training_service import TrainingService


class AffineModel:
    """f(x) = intercept + w . x, exposing the predictor interface of EnsembleModel"""

    def __init__(self, weights, intercept=0.0):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.intercept = float(intercept)

    @property
    def n_features(self) -> int:
        return int(self.weights.shape[0])

    def predict_batch(self, X):
        return self.intercept + np.asarray(X, dtype=np.float64) @ self.weights


def make_dataset(n_rows=200, n_features=4, seed=0, noise=0.05, names=None):
    """y = 3 x0 - 2 x1 + 0.5 x2 (+ noise); remaining features are irrelevant"""
    rng = make_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n_rows, n_features))
    coef = np.zeros(n_features)
    coef[: min(3, n_features)] = [3.0, -2.0, 0.5][: min(3, n_features)]
    y = X @ coef + noise * rng.standard_normal(n_rows)
    names = names or [f"f{j}" for j in range(n_features)]
    return Dataset(feature_names=tuple(names), rows=X, target=y)


@pytest.fixture
def affine_factory():
    return AffineModel


@pytest.fixture
def linear_dataset():
    return make_dataset()


@pytest.fixture
def trainer():
    return TrainingService(n_jobs=1)


@pytest.fixture
def small_forest(trainer, linear_dataset):
    params = ForestParams(
        n_trees=8, tree=TreeParams(max_depth=4, min_samples_leaf=2, features_per_split=2), seed=7
    )
    return trainer.fit_forest(linear_dataset, params)


@pytest.fixture
def small_gboost(trainer, linear_dataset):
    params = BoostParams(n_stages=20, learning_rate=0.2, tree=TreeParams(max_depth=2), seed=7)
    return trainer.fit_gboost(linear_dataset, params)


@pytest.fixture
def small_xgboost(trainer, linear_dataset):
    params = BoostParams(
        n_stages=20,
        learning_rate=0.2,
        tree=TreeParams(max_depth=3),
        mode=BoostMode.SECOND_ORDER,
        reg_lambda=1.0,
        seed=7,
    )
    return trainer.fit_xgboost(linear_dataset, params)


@pytest.fixture
def all_models(small_forest, small_gboost, small_xgboost):
    return {"rf": small_forest, "gb": small_gboost, "xgb": small_xgboost}


@pytest.fixture
def synthetic_csv(tmp_path):
    """Small synthetic UL dataset on disk"""
    return write_synthetic(tmp_path / "dataset_ul.csv", "ul", 240, seed=11)


@pytest.fixture
def config_file(tmp_path, synthetic_csv):
    """KEY=value settings for a fast end-to-end run"""
    path = tmp_path / "run.env"
    path.write_text(
        "\n".join(
            [
                "# small settings for tests",
                f"DATASET_PATH={synthetic_csv}",
                "SOURCE_TAG=ul",
                f"OUTPUT_DIR={tmp_path / 'out'}",
                "SEED=42",
                "RF_N_TREES=6",
                "RF_MAX_DEPTH=5",
                "GB_N_STAGES=15",
                "XGB_N_STAGES=15",
                "XGB_MAX_DEPTH=3",
                "SHAP_BACKGROUND_SIZE=8",
                "SHAP_EXACT_LIMIT=8",
                "SHAP_PERMUTATIONS=48",
                "SUMMARY_INSTANCES=4",
                "LIME_SAMPLES=300",
                "RIC_REPLAY_RECORDS=5",
                "LOG_LEVEL=WARNING",
            ]
        )
        + "\n"
    )
    return path


@pytest.fixture
def ric_session(small_gboost, linear_dataset, synthetic_csv):
    config = RunConfig(
        dataset_path=synthetic_csv,
        seed=5,
        background_size=10,
        lime_samples=400,
        ric_whitelist=["f0", "f2"],
        ric_top_k=2,
    )
    setup = reference_data(config, linear_dataset)
    return RicSession(small_gboost, setup, config.ric_whitelist, config.ric_top_k, seed=5)


@pytest.fixture
def feature_stats(linear_dataset):
    return compute_stats(linear_dataset)


@pytest_asyncio.fixture
async def client(ric_session):
    """Async test client with the RIC session dependency overridden"""

    app.dependency_overrides[get_ric_session] = lambda: ric_session

    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://testserver") as ac:
        yield ac

    app.dependency_overrides.clear()
