import numpy as np
import pytest

from app.core.config import Settings
from app.core.errors import ConfigError
from app.schemas.run import RunConfig
from app.services.ingest_service import write_synthetic
from app.services.pipeline_service import PipelineService

PRIMARY_DRIVERS = {"airtime", "selected_airtime", "bsr", "gput"}


def run_config(dataset_path, out, **overrides):
    settings = Settings(
        _env_file=None,
        RF_N_TREES=overrides.pop("rf_trees", 6),
        GB_N_STAGES=overrides.pop("gb_stages", 15),
        XGB_N_STAGES=overrides.pop("xgb_stages", 15),
        XGB_MAX_DEPTH=3,
    )
    values = dict(
        dataset_path=dataset_path,
        source_tag="ul",
        output_dir=out,
        background_size=8,
        exact_limit=8,
        shap_permutations=48,
        summary_instances=4,
        lime_samples=300,
        ric_replay_records=3,
        ric_whitelist=["airtime", "nRBs"],
    )
    values.update(overrides)
    return RunConfig.from_settings(settings, **values)


class TestRunConfig:
    """Test run configuration assembly"""

    def test_overrides_win(self, synthetic_csv, tmp_path):
        config = run_config(synthetic_csv, tmp_path, seed=7, lime_top_k=3)
        assert config.seed == 7
        assert config.lime_config(11).top_k == 3
        assert config.lime_config(11).seed == 11
        assert config.settings.RF_N_TREES == 6

    def test_default_drop_list(self, synthetic_csv, tmp_path):
        assert "cpu_platform" in run_config(synthetic_csv, tmp_path).effective_drop_columns
        explicit = run_config(synthetic_csv, tmp_path, drop_columns=["date"])
        assert explicit.effective_drop_columns == ["date"]

    def test_sub_seeds_differ(self, synthetic_csv, tmp_path):
        config = run_config(synthetic_csv, tmp_path)
        assert len({config.model_seed(tag) for tag in ("rf", "gb", "xgb")}) == 3
        assert config.split_config().seed != config.seed

    def test_invalid_values(self, synthetic_csv, tmp_path):
        with pytest.raises(ConfigError, match="model_tags"):
            run_config(synthetic_csv, tmp_path, model_tags=["svm"])
        with pytest.raises(ConfigError, match="dataset_path"):
            run_config(tmp_path / "missing.csv", tmp_path)


class TestPipelineService:
    """Test the pipeline stages on a small synthetic dataset"""

    def test_split_sizes(self, synthetic_csv, tmp_path):
        dataset, train, test = PipelineService(run_config(synthetic_csv, tmp_path)).load_split()
        assert dataset.n_rows == 240
        assert train.n_rows == 192
        assert test.n_rows == 48

    def test_highlight_row_nearest_median(self, synthetic_csv, tmp_path):
        service = PipelineService(run_config(synthetic_csv, tmp_path, model_tags=["gb"]))
        dataset, train, test = service.load_split()
        models = {"gb": service.fit("gb", train)}
        row = service.highlight_index(models, dataset, test)
        predictions = models["gb"].predict_batch(test.rows)
        distance = np.abs(predictions - np.median(dataset.target))
        assert distance[row] == distance.min()

    def test_summary_instances_are_seeded(self, synthetic_csv, tmp_path):
        service = PipelineService(run_config(synthetic_csv, tmp_path))
        _, _, test = service.load_split()
        first = service.summary_instances(test)
        assert first.n_rows == 4
        assert first.equals(service.summary_instances(test))

    def test_run_result(self, synthetic_csv, tmp_path):
        result = PipelineService(run_config(synthetic_csv, tmp_path / "out")).run()
        assert [tag for tag, _ in result.metrics] == ["rf", "gb", "xgb"]
        assert all(m.train_mse >= 0.0 for _, m in result.metrics)
        assert len(result.ranking.rows) == 12
        assert all(path.is_file() for path in result.artifacts)
        assert "Random Forest" in result.table


@pytest.mark.slow
class TestSyntheticRanking:
    """Feature ranking recovers the drivers planted in the synthetic data"""

    def test_primary_drivers_rank_high(self, tmp_path):
        path = write_synthetic(tmp_path / "ul.csv", "ul", 1500, seed=5)
        config = run_config(
            path,
            tmp_path / "out",
            rf_trees=30,
            gb_stages=100,
            xgb_stages=100,
            background_size=20,
            shap_permutations=128,
            summary_instances=10,
            lime_samples=2000,
            ric_replay_records=0,
        )
        ranking = PipelineService(config).run().ranking
        names = [row.feature for row in ranking.rows]

        assert len(PRIMARY_DRIVERS & set(names[:6])) >= 3
        assert names.index("clockspeed") >= len(names) // 2


@pytest.mark.slow
class TestSyntheticModelOrdering:
    """Default hyperparameters fit the synthetic sweep RF best, GB worst"""

    @pytest.mark.parametrize("variant", ["ul", "dlul"])
    def test_train_mse_ordering(self, tmp_path, variant):
        path = write_synthetic(tmp_path / f"{variant}.csv", variant, 2000, seed=42)
        config = RunConfig.from_settings(
            Settings(_env_file=None), dataset_path=path, source_tag=variant, output_dir=tmp_path
        )
        assert config.seed == 42
        service = PipelineService(config)
        _, train, test = service.load_split()
        metrics = dict(service.evaluate(service.fit_all(train), train, test))
        train_mse = {tag: m.train_mse for tag, m in metrics.items()}

        assert train_mse["rf"] < train_mse["xgb"] < train_mse["gb"]
