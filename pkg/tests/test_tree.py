import numpy as np
import pytest

from app.core.errors import TreeError
from app.core.seeding import make_rng
from app.models.tree import (
    LEAF,
    fit_tree,
    predict_tree,
    predict_tree_batch,
    resolve_features_per_split,
)
from app.schemas.params import SplitMode, TreeParams


@pytest.fixture
def rng():
    return make_rng(0)


class TestFitTree:
    """Test regression tree growth"""

    def test_step_function_split(self, rng):
        """A clean step is split at the midpoint between the two groups"""
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        tree = fit_tree(X, y, TreeParams(max_depth=3), rng)

        assert tree.feature[0] == 0
        assert tree.threshold[0] == 2.5
        assert tree.n_leaves == 2
        assert predict_tree(tree, np.array([2.5])) == 0.0
        assert predict_tree(tree, np.array([2.6])) == 1.0

    def test_constant_target_is_single_leaf(self, rng):
        X = np.arange(10, dtype=float).reshape(-1, 1)
        tree = fit_tree(X, np.full(10, 7.0), TreeParams(max_depth=5), rng)
        assert tree.n_nodes == 1
        assert tree.feature[0] == LEAF
        assert tree.value[0] == 7.0

    def test_min_samples_leaf_respected(self, rng, linear_dataset):
        params = TreeParams(max_depth=8, min_samples_leaf=7)
        tree = fit_tree(linear_dataset.rows, linear_dataset.target, params, rng)
        leaves = tree.feature == LEAF
        assert np.all(tree.n_samples[leaves] >= 7)

    def test_depth_bounded(self, rng, linear_dataset):
        tree = fit_tree(linear_dataset.rows, linear_dataset.target, TreeParams(max_depth=3), rng)
        assert tree.depth <= 3
        assert tree.n_leaves <= 8

    def test_leaf_values_are_routed_means(self, rng, linear_dataset):
        X, y = linear_dataset.rows, linear_dataset.target
        tree = fit_tree(X, y, TreeParams(max_depth=3), rng)
        leaves = tree.apply(X)
        for leaf in np.unique(leaves):
            assert tree.value[leaf] == pytest.approx(np.mean(y[leaves == leaf]))

    def test_batch_matches_single_prediction(self, rng, linear_dataset):
        X, y = linear_dataset.rows, linear_dataset.target
        tree = fit_tree(X, y, TreeParams(max_depth=4), rng)
        batch = predict_tree_batch(tree, X[:25])
        single = np.array([predict_tree(tree, x) for x in X[:25]])
        assert np.array_equal(batch, single)

    def test_tie_goes_to_lower_feature_index(self, rng):
        X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        tree = fit_tree(X, y, TreeParams(max_depth=1), rng)
        assert tree.feature[0] == 0

    def test_tie_goes_to_smaller_threshold(self, rng):
        """Symmetric target: splitting after row 1 or row 3 gains the same"""
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([0.0, 1.0, 1.0, 0.0])
        tree = fit_tree(X, y, TreeParams(max_depth=1), rng)
        assert tree.threshold[0] == 1.5

    def test_second_order_root_leaf(self, rng):
        X = np.arange(5, dtype=float).reshape(-1, 1)
        params = TreeParams(max_depth=2, split_mode=SplitMode.SECOND_ORDER_GAIN)
        g, h = np.full(5, 2.0), np.ones(5)
        tree = fit_tree(X, np.zeros(5), params, rng, gradients=(g, h))
        assert tree.n_nodes == 1
        assert tree.value[0] == -2.0

    def test_second_order_lambda_shrinks_leaf(self, rng):
        X = np.arange(5, dtype=float).reshape(-1, 1)
        params = TreeParams(
            max_depth=2, split_mode=SplitMode.SECOND_ORDER_GAIN, second_order_lambda=5.0
        )
        tree = fit_tree(X, np.zeros(5), params, rng, gradients=(np.full(5, 2.0), np.ones(5)))
        assert tree.value[0] == -1.0

    def test_min_split_gain_prunes(self, rng):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        g = np.array([-0.1, -0.1, 0.1, 0.1])
        params = TreeParams(
            max_depth=2, split_mode=SplitMode.SECOND_ORDER_GAIN, min_split_gain=1.0
        )
        tree = fit_tree(X, np.zeros(4), params, rng, gradients=(g, np.ones(4)))
        assert tree.n_nodes == 1


class TestTreeErrors:
    """Test input validation"""

    def test_empty_input(self, rng):
        with pytest.raises(TreeError):
            fit_tree(np.zeros((0, 2)), np.zeros(0), TreeParams(), rng)

    def test_length_mismatch(self, rng):
        with pytest.raises(TreeError, match="row count"):
            fit_tree(np.zeros((3, 2)), np.zeros(4), TreeParams(), rng)

    def test_non_finite(self, rng):
        X = np.array([[1.0], [np.nan]])
        with pytest.raises(TreeError, match="finite"):
            fit_tree(X, np.zeros(2), TreeParams(), rng)

    def test_second_order_requires_gradients(self, rng):
        params = TreeParams(split_mode=SplitMode.SECOND_ORDER_GAIN)
        with pytest.raises(TreeError, match="gradients"):
            fit_tree(np.zeros((3, 1)), np.zeros(3), params, rng)

    def test_features_per_split_out_of_range(self, rng):
        with pytest.raises(TreeError):
            fit_tree(np.zeros((3, 2)), np.zeros(3), TreeParams(features_per_split=3), rng)

    @pytest.mark.parametrize("seed", range(5))
    def test_constant_features_are_never_drawn(self, seed):
        """With one feature drawn per node, the single varying column still splits every node"""
        grid = np.arange(8, dtype=float)
        X = np.column_stack([np.full(8, 2.0), grid, np.zeros(8)])
        tree = fit_tree(X, grid, TreeParams(max_depth=3, features_per_split=1), make_rng(seed))

        assert tree.used_features() == {1}
        assert tree.n_leaves == 8
        assert np.array_equal(predict_tree_batch(tree, X), grid)

    def test_wrong_prediction_width(self, rng):
        tree = fit_tree(np.zeros((3, 2)), np.zeros(3), TreeParams(), rng)
        with pytest.raises(TreeError):
            predict_tree(tree, np.zeros(3))
        with pytest.raises(TreeError):
            predict_tree_batch(tree, np.zeros((2, 3)))


class TestResolveFeaturesPerSplit:
    def test_auto_is_a_third(self):
        assert resolve_features_per_split("auto", 12) == 4
        assert resolve_features_per_split("auto", 2) == 1

    def test_all(self):
        assert resolve_features_per_split("all", 12) == 12

    def test_integer_passthrough(self):
        assert resolve_features_per_split(5, 12) == 5
