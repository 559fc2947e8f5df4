"""From-scratch random forest for benign/malicious classification.

Each tree trains on a bootstrap sample drawn from its own PRNG stream
(derived from the forest seed and tree index), samples mtry feature
candidates without replacement at every split, and picks the (feature,
threshold) pair with the largest Gini impurity decrease. Thresholds sit
at midpoints of consecutive distinct sorted values; ties in impurity
decrease resolve to the lower feature index, then the lower threshold.
Everything is deterministic given (data, labels, params), so identical
training runs serialize to identical bytes.

The prediction score is the fraction of trees whose leaf majority is
malicious; a tied leaf votes benign (the lower class index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .errors import ShapeError, TrainingError
from .labels import index_to_label
from .rng import Xoshiro256StarStar, derive_seed
from .validation import as_float_matrix, as_label_indices, check_finite

TREE_STREAM_TAG = "tree"


@dataclass(frozen=True)
class TreeNode:
    """Flat-array tree node: internal when left >= 0, else a leaf.

    Internal nodes route a sample left when value <= threshold. Leaves
    carry the (benign, malicious) training counts they were grown from.
    """

    feature_index: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    count_benign: int = 0
    count_malicious: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.left < 0


@dataclass
class ForestParams:
    tree_count: int = 500
    mtry: int | None = None  # default: floor(sqrt(dimensionality))
    min_leaf: int = 1
    seed: int = 0

    def resolved_mtry(self, dimensionality: int) -> int:
        if self.mtry is not None:
            if not 1 <= self.mtry <= max(1, dimensionality):
                raise ValueError(
                    f"mtry must be in [1, {dimensionality}], got {self.mtry}"
                )
            return self.mtry
        return max(1, int(math.floor(math.sqrt(dimensionality))))


@dataclass
class ForestModel:
    trees: list[list[TreeNode]]
    tree_count: int
    mtry: int
    seed: int
    dimensionality: int
    catalog_digest: bytes = b""


def _gini_decrease_parent(n_ben: int, n_mal: int, m: int) -> float:
    pb = n_ben / m
    pm = n_mal / m
    return 1.0 - pb * pb - pm * pm


def best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray, feats) -> tuple[int, float] | None:
    """Best (feature, threshold) over the candidate features, or None.

    Candidates are midpoints between consecutive distinct sorted values.
    Only splits with strictly positive impurity decrease qualify; among
    equal decreases the lowest feature index wins, then the lowest
    threshold. `feats` must be in ascending order for the tie-break.
    """
    m = len(idx)
    if m < 2:
        return None
    feats = np.asarray(feats, dtype=np.int64)
    sub = X[np.ix_(idx, feats)]
    ysub = y[idx]
    n_mal = int(ysub.sum())
    n_ben = m - n_mal
    parent = _gini_decrease_parent(n_ben, n_mal, m)

    order = np.argsort(sub, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(sub, order, axis=0)
    sorted_labels = ysub[order].astype(np.float64)

    left_mal = np.cumsum(sorted_labels, axis=0)[:-1]          # (m-1, f)
    left_n = np.arange(1, m, dtype=np.float64)[:, None]
    left_ben = left_n - left_mal
    right_n = m - left_n
    right_mal = n_mal - left_mal
    right_ben = right_n - right_mal

    pbl = left_ben / left_n
    pml = left_mal / left_n
    gini_left = 1.0 - pbl * pbl - pml * pml
    pbr = right_ben / right_n
    pmr = right_mal / right_n
    gini_right = 1.0 - pbr * pbr - pmr * pmr
    child = (left_n * gini_left + right_n * gini_right) / m
    decrease = parent - child

    valid = sorted_vals[1:] != sorted_vals[:-1]
    decrease[~valid] = -np.inf

    # Feature-major flattening: argmax's first hit realizes the
    # (lower feature, lower threshold) tie-break because thresholds
    # ascend within each feature column.
    flat = decrease.T.ravel()
    best = int(np.argmax(flat))
    if not (flat[best] > 0.0):
        return None
    f_local, pos = divmod(best, m - 1)
    threshold = (sorted_vals[pos, f_local] + sorted_vals[pos + 1, f_local]) / 2.0
    return int(feats[f_local]), float(threshold)


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    mtry: int,
    min_leaf: int,
    rng: Xoshiro256StarStar,
) -> list[TreeNode]:
    """Depth-first growth (left child before right), flat node layout."""
    n, k = X.shape
    nodes: list[TreeNode | None] = [None]
    stack: list[tuple[np.ndarray, int]] = [(np.arange(n, dtype=np.int64), 0)]
    while stack:
        idx, pos = stack.pop()
        m = len(idx)
        n_mal = int(y[idx].sum())
        n_ben = m - n_mal
        split = None
        if n_ben > 0 and n_mal > 0 and m > min_leaf and k > 0:
            feats = rng.sample_indices(k, min(mtry, k))
            split = best_split(X, y, idx, feats)
        if split is not None:
            f, thr = split
            mask = X[idx, f] <= thr
            left_idx = idx[mask]
            right_idx = idx[~mask]
            # Degenerate partitions are possible only when a midpoint
            # rounds onto a data value; fall back to a leaf.
            if len(left_idx) == 0 or len(right_idx) == 0:
                split = None
            else:
                left_pos = len(nodes)
                nodes.append(None)
                right_pos = len(nodes)
                nodes.append(None)
                nodes[pos] = TreeNode(f, thr, left_pos, right_pos, 0, 0)
                stack.append((right_idx, right_pos))
                stack.append((left_idx, left_pos))
        if split is None:
            nodes[pos] = TreeNode(-1, 0.0, -1, -1, n_ben, n_mal)
    return nodes


def bootstrap_indices(seed: int, tree_index: int, n: int) -> np.ndarray:
    """The deterministic bootstrap draw for one tree (with replacement)."""
    rng = Xoshiro256StarStar(derive_seed(seed, TREE_STREAM_TAG, tree_index))
    return np.asarray([rng.randbelow(n) for _ in range(n)], dtype=np.int64)


def train_forest(data, labels, params: ForestParams, catalog_digest: bytes = b"") -> ForestModel:
    """Train tree_count bagged trees; deterministic given params.seed."""
    X = as_float_matrix(data)
    check_finite(X)
    n, k = X.shape
    y = as_label_indices(labels, count=n)
    if n < 2:
        raise TrainingError(f"training requires at least 2 samples, got {n}")
    if y.min() == y.max():
        raise TrainingError("training data contains a single class")
    if params.tree_count < 1:
        raise ValueError(f"tree_count must be >= 1, got {params.tree_count}")
    if params.min_leaf < 1:
        raise ValueError(f"min_leaf must be >= 1, got {params.min_leaf}")
    mtry = params.resolved_mtry(k)

    trees: list[list[TreeNode]] = []
    for t in range(params.tree_count):
        rng = Xoshiro256StarStar(derive_seed(params.seed, TREE_STREAM_TAG, t))
        boot = np.asarray([rng.randbelow(n) for _ in range(n)], dtype=np.int64)
        trees.append(_grow_tree(X[boot], y[boot], mtry, params.min_leaf, rng))
    return ForestModel(
        trees=trees,
        tree_count=params.tree_count,
        mtry=mtry,
        seed=params.seed,
        dimensionality=k,
        catalog_digest=catalog_digest,
    )


def _tree_votes_malicious(tree: list[TreeNode], vector: np.ndarray) -> bool:
    node = tree[0]
    while not node.is_leaf:
        node = tree[node.left] if vector[node.feature_index] <= node.threshold else tree[node.right]
    return node.count_malicious > node.count_benign


def predict_score(model: ForestModel, vector) -> float:
    """Fraction of trees voting malicious, in [0, 1]."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (model.dimensionality,):
        raise ShapeError(f"vector has shape {v.shape}, model expects ({model.dimensionality},)")
    votes = sum(1 for tree in model.trees if _tree_votes_malicious(tree, v))
    return votes / model.tree_count


def predict_scores(model: ForestModel, data) -> np.ndarray:
    X = as_float_matrix(data)
    if X.shape[1] != model.dimensionality:
        raise ShapeError(f"data has {X.shape[1]} columns, model expects {model.dimensionality}")
    return np.asarray([predict_score(model, row) for row in X])


def predict_label(model: ForestModel, vector, threshold: float = 0.5) -> str:
    """Malicious iff score strictly exceeds the threshold."""
    return index_to_label(1 if predict_score(model, vector) > threshold else 0)


def oob_error(model: ForestModel, data, labels) -> float:
    """Out-of-bag misclassification rate.

    Bootstrap membership is regenerated from the model seed, so this
    works on any model trained by train_forest on the same data. Samples
    that are in-bag for every tree are excluded; a tied vote is benign.
    """
    X = as_float_matrix(data)
    n = X.shape[0]
    y = as_label_indices(labels, count=n)
    in_bag = [set(bootstrap_indices(model.seed, t, n).tolist()) for t in range(model.tree_count)]
    wrong = 0
    counted = 0
    for i in range(n):
        mal = ben = 0
        for t, tree in enumerate(model.trees):
            if i in in_bag[t]:
                continue
            if _tree_votes_malicious(tree, X[i]):
                mal += 1
            else:
                ben += 1
        if mal + ben == 0:
            continue
        counted += 1
        predicted = 1 if mal > ben else 0
        if predicted != int(y[i]):
            wrong += 1
    return wrong / counted if counted else 0.0


class RandomForest(BaseEstimator, ClassifierMixin):
    """sklearn-style wrapper around train_forest/predict."""

    def __init__(
        self,
        tree_count: int = 500,
        mtry: int | None = None,
        min_leaf: int = 1,
        seed: int = 0,
        threshold: float = 0.5,
    ):
        self.tree_count = tree_count
        self.mtry = mtry
        self.min_leaf = min_leaf
        self.seed = seed
        self.threshold = threshold

    def fit(self, X, y):
        params = ForestParams(
            tree_count=self.tree_count, mtry=self.mtry, min_leaf=self.min_leaf, seed=self.seed
        )
        self.model_ = train_forest(X, y, params)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("RandomForest must be fitted before predicting")

    def predict_score(self, X) -> np.ndarray:
        self._check_fitted()
        return predict_scores(self.model_, X)

    def predict(self, X) -> list[str]:
        scores = self.predict_score(X)
        return [index_to_label(1 if s > self.threshold else 0) for s in scores]
