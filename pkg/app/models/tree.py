"""CART-style regression trees.

Nodes are stored in flat arrays in preorder (root first, then the left
subtree, then the right subtree). A node with ``feature == -1`` is a leaf.
Routing rule: go left iff ``x[feature] <= threshold``.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from app.core.errors import TreeError
from app.schemas.params import SplitMode, TreeParams

logger = logging.getLogger(__name__)

LEAF = -1


@dataclass(frozen=True, eq=False)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    n_features: int

    def __post_init__(self):
        for name, dtype in (
            ("feature", np.int64),
            ("threshold", np.float64),
            ("left", np.int64),
            ("right", np.int64),
            ("value", np.float64),
            ("n_samples", np.int64),
        ):
            array = np.array(getattr(self, name), dtype=dtype, copy=True)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

        n_nodes = self.feature.shape[0]
        if n_nodes == 0:
            raise TreeError("A tree needs at least one node")
        for name in ("threshold", "left", "right", "value", "n_samples"):
            if getattr(self, name).shape[0] != n_nodes:
                raise TreeError(f"Node array '{name}' has the wrong length")
        internal = self.feature != LEAF
        if np.any(self.feature[internal] >= self.n_features):
            raise TreeError("Split feature index out of range")
        children = np.concatenate([self.left[internal], self.right[internal]])
        if np.any(children <= 0) or np.any(children >= n_nodes):
            raise TreeError("Internal nodes must reference two valid children")

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        # Preorder guarantees parents come before their children
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def used_features(self) -> set:
        return {int(f) for f in self.feature if f != LEAF}

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X"""
        X = _check_matrix(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.nonzero(active)[0]
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active[rows] = self.feature[node[rows]] != LEAF
        return node


def _check_matrix(X: np.ndarray, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise TreeError(
            f"Expected rows with {n_features} features, got shape {X.shape}"
        )
    return X


def resolve_features_per_split(value, n_features: int) -> int:
    if value == "all":
        return n_features
    if value == "auto":
        return max(1, n_features // 3)
    value = int(value)
    if not 1 <= value <= n_features:
        raise TreeError(
            f"features_per_split={value} outside [1, {n_features}]"
        )
    return value


class _TreeBuilder:
    """Greedy top-down growth over one (stat, weight) pair.

    Variance mode grows on (y, 1) with no penalty; second-order mode grows on
    (g, h) with penalty lambda. Both share one split search so that with
    squared-loss gradients and lambda = 0 they choose identical partitions.
    """

    def __init__(
        self,
        X: np.ndarray,
        stat: np.ndarray,
        weight: np.ndarray,
        params: TreeParams,
        rng: np.random.Generator,
        features_per_split: int,
    ):
        self.X = X
        self.stat = stat
        self.weight = weight
        self.params = params
        self.rng = rng
        self.k = features_per_split
        self.second_order = params.split_mode == SplitMode.SECOND_ORDER_GAIN
        self.lam = params.second_order_lambda if self.second_order else 0.0
        self.nodes: List[List] = []

    def _score(self, G: np.ndarray, H: np.ndarray) -> np.ndarray:
        denominator = H + self.lam
        out = np.zeros(np.shape(G), dtype=np.float64)
        np.divide(G * G, denominator, out=out, where=denominator > 0)
        return out

    def _leaf_value(self, idx: np.ndarray) -> float:
        G = float(np.sum(self.stat[idx]))
        H = float(np.sum(self.weight[idx]))
        if self.second_order:
            denominator = H + self.lam
            return -G / denominator if denominator > 0 else 0.0
        return G / H

    def _draw_features(self, idx: np.ndarray) -> np.ndarray:
        """Sorted feature subset, drawn among the features not constant at this node"""
        X = self.X[idx]
        varying = np.flatnonzero(X.max(axis=0) > X.min(axis=0))
        if self.k >= varying.size:
            return varying
        return np.sort(self.rng.choice(varying, size=self.k, replace=False))

    def _best_split(self, idx: np.ndarray) -> Optional[Tuple[float, int, float]]:
        n = idx.shape[0]
        min_leaf = self.params.min_samples_leaf
        if n < 2 * min_leaf:
            return None
        S = self.stat[idx]
        W = self.weight[idx]
        if np.ptp(S) == 0 and np.ptp(W) == 0:
            return None

        G = np.sum(S)
        H = np.sum(W)
        parent = self._score(np.asarray(G), np.asarray(H))
        best: Optional[Tuple[float, int, float]] = None

        for j in self._draw_features(idx):
            xj = self.X[idx, j]
            order = np.argsort(xj, kind="stable")
            xs = xj[order]
            positions = np.arange(min_leaf - 1, n - min_leaf)
            if positions.size == 0:
                continue
            positions = positions[xs[positions] < xs[positions + 1]]
            if positions.size == 0:
                continue

            GL = np.cumsum(S[order])[positions]
            HL = np.cumsum(W[order])[positions]
            gain = self._score(GL, HL) + self._score(G - GL, H - HL) - parent
            if self.second_order:
                gain = 0.5 * gain - self.params.min_split_gain

            # argmax keeps the first maximum, i.e. the smallest threshold
            i = int(np.argmax(gain))
            if best is None or gain[i] > best[0]:
                a, b = xs[positions[i]], xs[positions[i] + 1]
                threshold = 0.5 * (a + b)
                if not a <= threshold < b:
                    threshold = a
                best = (float(gain[i]), int(j), float(threshold))

        if best is None or not best[0] > 0.0:
            return None
        return best

    def grow(self, idx: np.ndarray, depth: int) -> int:
        node = len(self.nodes)
        self.nodes.append([LEAF, 0.0, LEAF, LEAF, self._leaf_value(idx), idx.shape[0]])

        split = self._best_split(idx) if depth < self.params.max_depth else None
        if split is None:
            return node

        _, feature, threshold = split
        goes_left = self.X[idx, feature] <= threshold
        self.nodes[node][0] = feature
        self.nodes[node][1] = threshold
        self.nodes[node][2] = self.grow(idx[goes_left], depth + 1)
        self.nodes[node][3] = self.grow(idx[~goes_left], depth + 1)
        return node

    def build(self) -> RegressionTree:
        columns = list(zip(*self.nodes))
        return RegressionTree(
            feature=np.array(columns[0]),
            threshold=np.array(columns[1]),
            left=np.array(columns[2]),
            right=np.array(columns[3]),
            value=np.array(columns[4]),
            n_samples=np.array(columns[5]),
            n_features=self.X.shape[1],
        )


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: TreeParams,
    rng: np.random.Generator,
    gradients: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> RegressionTree:
    """Grow one regression tree.

    Variance-reduction mode: leaf value is the mean of the routed targets.
    Second-order mode: ``gradients=(g, h)`` are required and the leaf value is
    ``-G / (H + lambda)``; the split gain is
    ``0.5 * [GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ)] - min_split_gain``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise TreeError("Cannot fit a tree on empty input")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise TreeError("X row count must equal y length")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise TreeError("Tree inputs must be finite")

    n = X.shape[0]
    if params.split_mode == SplitMode.SECOND_ORDER_GAIN:
        if gradients is None:
            raise TreeError("second_order_gain mode needs (g, h) gradients")
        g, h = (np.asarray(a, dtype=np.float64) for a in gradients)
        if g.shape != (n,) or h.shape != (n,):
            raise TreeError("Gradient vectors must match the row count")
        if not (np.isfinite(g).all() and np.isfinite(h).all()):
            raise TreeError("Gradients must be finite")
        stat, weight = g, h
    else:
        stat, weight = y, np.ones(n, dtype=np.float64)

    k = resolve_features_per_split(params.features_per_split, X.shape[1])
    builder = _TreeBuilder(X, stat, weight, params, rng, k)
    builder.grow(np.arange(n), depth=0)
    tree = builder.build()
    logger.debug(
        f"Fitted tree: {tree.n_nodes} nodes, {tree.n_leaves} leaves, depth {tree.depth}"
    )
    return tree


def predict_tree(tree: RegressionTree, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != tree.n_features:
        raise TreeError(
            f"Expected a vector of {tree.n_features} features, got shape {x.shape}"
        )
    node = 0
    while tree.feature[node] != LEAF:
        if x[tree.feature[node]] <= tree.threshold[node]:
            node = tree.left[node]
        else:
            node = tree.right[node]
    return float(tree.value[node])


def predict_tree_batch(tree: RegressionTree, X: np.ndarray) -> np.ndarray:
    return tree.value[tree.apply(X)]
