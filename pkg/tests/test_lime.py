import numpy as np
import pytest

from app.core.errors import ExplainError
from app.models.dataset import Dataset, FeatureStats
from app.models.ensemble import predict
from app.schemas.explain import ExplainMethod, LimeConfig
from app.schemas.params import ForestParams, TreeParams
from app.services.ingest_service import compute_stats
from app.services.lime_service import lime_explain, lime_stability, top_k_mask


def stats_for(names, mean, std):
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    return FeatureStats(
        feature_names=tuple(names), mean=mean, std=std, minimum=mean - 3 * std, maximum=mean + 3 * std
    )


class TestLimeExplain:
    """Test the local linear surrogate"""

    def test_recovers_affine_coefficients(self, affine_factory):
        model = affine_factory([2.0, -1.0], intercept=1.0)
        stats = stats_for(["a", "b"], [0.0, 0.0], [1.0, 2.0])
        x = np.array([0.5, 1.5])
        attribution = lime_explain(model, x, stats, LimeConfig(n_samples=500, top_k=2, seed=3))

        assert np.allclose(attribution.coefficients, [2.0, -1.0], rtol=0, atol=1e-9)
        assert attribution.intercept == pytest.approx(1.0, abs=1e-9)
        assert attribution.prediction == model.predict_batch(x[None, :])[0]
        assert attribution.method == ExplainMethod.LIME
        assert not attribution.regularized

    def test_contribution_is_slope_times_standardized_value(self, affine_factory):
        model = affine_factory([2.0, -1.0])
        stats = stats_for(["a", "b"], [0.0, 1.0], [1.0, 2.0])
        x = np.array([0.5, 2.0])
        attribution = lime_explain(model, x, stats, LimeConfig(n_samples=300, top_k=2))
        # slope_std = w * std, standardized value = (x - mean) / std
        assert np.allclose(attribution.phi, [2.0 * 0.5, -1.0 * 1.0], rtol=0, atol=1e-9)
        assert attribution.base_value == pytest.approx(0.0 + 2.0 * 0.0 - 1.0 * 1.0, abs=1e-9)

    def test_constant_feature_has_zero_coefficient(self, affine_factory):
        model = affine_factory([2.0, 5.0, -1.0])
        stats = stats_for(["a", "b", "c"], [0.0, 3.0, 0.0], [1.0, 0.0, 1.0])
        attribution = lime_explain(
            model, np.array([0.2, 3.0, 0.4]), stats, LimeConfig(n_samples=200, top_k=3)
        )
        assert attribution.coefficients[1] == 0.0
        assert attribution.phi[1] == 0.0

    def test_top_k_zeroes_remaining_contributions(self, affine_factory):
        model = affine_factory([3.0, -2.0, 0.5, 0.1])
        stats = stats_for([f"f{j}" for j in range(4)], [0.0] * 4, [1.0] * 4)
        x = np.array([1.0, 1.0, 1.0, 1.0])
        attribution = lime_explain(model, x, stats, LimeConfig(n_samples=400, top_k=2))
        assert [p != 0.0 for p in attribution.phi] == [True, True, False, False]
        assert all(c != 0.0 for c in attribution.coefficients)

    def test_top_k_ranks_by_standardized_slope(self, affine_factory):
        # raw coefficients favour b, slopes scaled by std favour a
        model = affine_factory([1.0, 5.0])
        stats = stats_for(["a", "b"], [0.0, 0.0], [10.0, 1.0])
        attribution = lime_explain(model, np.array([1.0, 1.0]), stats, LimeConfig(n_samples=300, top_k=1))
        assert attribution.coefficients == pytest.approx([1.0, 5.0], abs=1e-9)
        assert attribution.phi[0] != 0.0
        assert attribution.phi[1] == 0.0

    def test_deterministic_for_seed(self, small_gboost, linear_dataset, feature_stats):
        x = linear_dataset.rows[5]
        config = LimeConfig(n_samples=300, top_k=4, seed=11)
        first = lime_explain(small_gboost, x, feature_stats, config)
        second = lime_explain(small_gboost, x, feature_stats, config)
        assert first.phi == second.phi
        assert first.seed == 11

    def test_too_few_samples(self, small_gboost, linear_dataset, feature_stats):
        with pytest.raises(ExplainError, match="d\\+2"):
            lime_explain(small_gboost, linear_dataset.rows[0], feature_stats, LimeConfig(n_samples=5))

    def test_schema_mismatch(self, small_gboost, linear_dataset):
        stats = stats_for(["a", "b"], [0.0, 0.0], [1.0, 1.0])
        with pytest.raises(ExplainError):
            lime_explain(small_gboost, linear_dataset.rows[0], stats, LimeConfig())

    def test_kernel_width_default(self):
        assert LimeConfig().width_for(16) == 3.0
        assert LimeConfig(kernel_width=1.5).width_for(16) == 1.5

    @pytest.mark.slow
    def test_local_slopes_of_fully_grown_forest(self, trainer):
        grid = np.linspace(0.0, 1.0, 100)
        rows = np.array(np.meshgrid(grid, grid, indexing="ij")).reshape(2, -1).T
        dataset = Dataset(
            feature_names=("x0", "x1"), rows=rows, target=3.0 * rows[:, 0] - 2.0 * rows[:, 1]
        )
        params = ForestParams(
            n_trees=2,
            bootstrap=False,
            tree=TreeParams(max_depth=40, min_samples_leaf=1, features_per_split="all"),
            seed=1,
        )
        model = trainer.fit_forest(dataset, params)
        stats = stats_for(dataset.feature_names, [0.5, 0.5], [0.1, 0.1])
        x = np.array([0.43, 0.57])

        attribution = lime_explain(model, x, stats, LimeConfig(n_samples=5000, top_k=2, seed=2))

        assert attribution.coefficients == pytest.approx([3.0, -2.0], rel=1e-2)
        assert attribution.prediction == predict(model, x)


class TestTopKMask:
    def test_ties_prefer_lower_index(self):
        assert top_k_mask(np.array([1.0, -2.0, 2.0, 0.5]), 2).tolist() == [False, True, True, False]
        assert top_k_mask(np.array([1.0, 1.0, 1.0]), 1).tolist() == [True, False, False]

    def test_k_above_width(self):
        assert top_k_mask(np.array([0.0, 1.0]), 5).all()


class TestLimeStability:
    """Test seed-to-seed spread of explanations"""

    def test_affine_model_is_stable(self, affine_factory):
        model = affine_factory([2.0, -1.0, 0.0])
        stats = stats_for(["a", "b", "c"], [0.0] * 3, [1.0] * 3)
        report = lime_stability(
            model, np.array([1.0, 1.0, 1.0]), stats, LimeConfig(n_samples=200, top_k=2), seeds=[1, 2, 3]
        )
        assert report.seeds == [1, 2, 3]
        assert np.allclose(report.std_phi, 0.0, atol=1e-9)
        assert report.top_k_frequency == [1.0, 1.0, 0.0]
        assert report.unstable() == []

    def test_ensemble_frequencies_in_unit_interval(self, small_forest, linear_dataset):
        stats = compute_stats(linear_dataset)
        report = lime_stability(
            small_forest, linear_dataset.rows[0], stats, LimeConfig(n_samples=300, top_k=2), seeds=range(4)
        )
        assert all(0.0 <= f <= 1.0 for f in report.top_k_frequency)
        assert sum(report.top_k_frequency) == pytest.approx(2.0)

    def test_needs_a_seed(self, small_forest, linear_dataset, feature_stats):
        with pytest.raises(ExplainError):
            lime_stability(small_forest, linear_dataset.rows[0], feature_stats, LimeConfig(), seeds=[])
