"""Entropy decision tree and random forest, built greedily from scratch.

Split thresholds are midpoints between consecutive distinct sorted values;
the split maximizing information gain wins, ties going to the lowest feature
index and then the lowest threshold. Both estimators consume flattened
(j * n) window vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .errors import ConfigurationError, DomainError, ShapeError

_FEATURE_CHUNK = 128


def _xlogx(v: np.ndarray) -> np.ndarray:
    return v * np.log2(np.maximum(v, 1.0))


def entropy(class_counts) -> float:
    """Shannon entropy in bits of a class-count vector."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise DomainError("class counts must be a non-empty vector")
    if np.any(counts < 0):
        raise DomainError("class counts must be non-negative")
    total = counts.sum()
    if total == 0:
        raise DomainError("entropy of an empty node is undefined")
    return float(np.log2(total) - _xlogx(counts).sum() / total)


@dataclass
class TreeNode:
    """Internal node (feature_index/threshold/children) or leaf (class_counts)."""

    n_samples: int
    feature_index: int | None = None
    threshold: float = 0.0
    gain: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    class_counts: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.class_counts is not None

    @property
    def predicted_class(self) -> int:
        # argmax keeps the lowest index on ties
        return int(np.argmax(self.class_counts))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X.reshape(X.shape[0], -1)
    if X.ndim != 2:
        raise ShapeError(f"expected a (samples, features) matrix, got shape {X.shape}")
    return X


def _best_split(Xn: np.ndarray, yn: np.ndarray, class_count: int, parent_entropy: float):
    """Best (gain, local_feature, threshold) over all candidate splits of a node.

    Works feature-chunk-wise: sort each column, accumulate per-class prefix
    counts, and score every between-distinct-values midpoint at once.
    """
    m, n_feat = Xn.shape
    sizes_l = np.arange(1, m, dtype=np.float64)[:, None]
    sizes_r = m - sizes_l
    best_gain = -np.inf
    best_feat = -1
    best_thr = 0.0
    for start in range(0, n_feat, _FEATURE_CHUNK):
        cols = slice(start, min(start + _FEATURE_CHUNK, n_feat))
        Xc = Xn[:, cols]
        order = np.argsort(Xc, axis=0, kind="stable")
        Xs = np.take_along_axis(Xc, order, axis=0)
        y_ord = yn[order]
        acc_l = np.zeros((m - 1, Xc.shape[1]))
        acc_r = np.zeros((m - 1, Xc.shape[1]))
        for c in range(class_count):
            cum = np.cumsum(y_ord == c, axis=0, dtype=np.float64)
            left_c = cum[:-1]
            acc_l += _xlogx(left_c)
            acc_r += _xlogx(cum[-1] - left_c)
        with np.errstate(divide="ignore", invalid="ignore"):
            h_l = np.log2(sizes_l) - acc_l / sizes_l
            h_r = np.log2(sizes_r) - acc_r / sizes_r
        weighted = (sizes_l * h_l + sizes_r * h_r) / m
        gain = parent_entropy - weighted
        gain[Xs[1:] <= Xs[:-1]] = -np.inf
        pos = np.argmax(gain, axis=0)
        col_ids = np.arange(Xc.shape[1])
        col_gain = gain[pos, col_ids]
        f_local = int(np.argmax(col_gain))
        if col_gain[f_local] > best_gain:
            best_gain = float(col_gain[f_local])
            best_feat = start + f_local
            i = pos[f_local]
            best_thr = float((Xs[i, f_local] + Xs[i + 1, f_local]) / 2.0)
    if not np.isfinite(best_gain):
        return None
    return best_gain, best_feat, best_thr


def _grow(X, y, rows, depth, max_depth, class_count, rng, max_features):
    counts = np.bincount(y[rows], minlength=class_count).astype(np.float64)
    m = rows.size
    if depth >= max_depth or counts.max() == m or m < 2:
        return TreeNode(n_samples=m, class_counts=counts)
    n = X.shape[1]
    if max_features is not None and max_features < n:
        feats = np.sort(rng.choice(n, size=max_features, replace=False))
    else:
        feats = np.arange(n)
    split = _best_split(X[rows][:, feats], y[rows], class_count, entropy(counts))
    if split is None:
        return TreeNode(n_samples=m, class_counts=counts)
    gain, f_local, thr = split
    f = int(feats[f_local])
    mask = X[rows, f] <= thr
    # depth is the only early stop besides purity: zero-gain splits are kept,
    # they can still enable pure grandchildren (e.g. xor-shaped data)
    return TreeNode(
        n_samples=m,
        feature_index=f,
        threshold=thr,
        gain=gain,
        left=_grow(X, y, rows[mask], depth + 1, max_depth, class_count, rng, max_features),
        right=_grow(X, y, rows[~mask], depth + 1, max_depth, class_count, rng, max_features),
    )


def _predict_from_root(root: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.int64)
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = node.predicted_class
        else:
            mask = X[idx, node.feature_index] <= node.threshold
            stack.append((node.left, idx[mask]))
            stack.append((node.right, idx[~mask]))
    return out


def _accumulate_importance(node: TreeNode, imp: np.ndarray, n_root: int) -> int:
    if node.is_leaf:
        return 0
    imp[node.feature_index] += (node.n_samples / n_root) * node.gain
    return 1 + _accumulate_importance(node.left, imp, n_root) + _accumulate_importance(node.right, imp, n_root)


def _tree_importance(root: TreeNode, n_features: int) -> tuple[np.ndarray, int]:
    imp = np.zeros(n_features)
    n_splits = _accumulate_importance(root, imp, root.n_samples)
    total = imp.sum()
    if total > 0:
        imp /= total
    return imp, n_splits


def count_nodes(node: TreeNode) -> int:
    if node.is_leaf:
        return 1
    return 1 + count_nodes(node.left) + count_nodes(node.right)


class DecisionTreeClassifier(BaseEstimator, ClassifierMixin):
    """Greedy entropy tree; max_depth is the only early stop besides purity."""

    def __init__(self, max_depth: int = 14, criterion: str = "entropy"):
        self.max_depth = max_depth
        self.criterion = criterion

    def _validate(self):
        if self.criterion != "entropy":
            raise ConfigurationError(f"only the entropy criterion is supported, got {self.criterion!r}")
        if self.max_depth < 0:
            raise ConfigurationError(f"max_depth must be >= 0, got {self.max_depth}")

    def fit(self, X, y, class_count: int | None = None):
        self._validate()
        X = _as_matrix(X)
        y = np.asarray(y, dtype=np.int64)
        if y.shape[0] != X.shape[0]:
            raise ShapeError(f"{X.shape[0]} samples but {y.shape[0]} labels")
        if y.size == 0:
            raise ShapeError("cannot fit on zero samples")
        self.n_features_in_ = X.shape[1]
        self.class_count_ = int(class_count if class_count is not None else y.max() + 1)
        self.root_ = _grow(
            X, y, np.arange(X.shape[0]), 0, self.max_depth, self.class_count_,
            rng=None, max_features=None,
        )
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "root_"):
            raise NotFittedError("fit the tree before predicting")
        X = _as_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"model expects {self.n_features_in_} features, got {X.shape[1]}")
        return _predict_from_root(self.root_, X)

    @property
    def feature_importances_(self) -> np.ndarray:
        """Mean decrease in impurity per feature; all zeros when the tree never split."""
        if not hasattr(self, "root_"):
            raise NotFittedError("fit the tree before asking for importances")
        imp, n_splits = _tree_importance(self.root_, self.n_features_in_)
        self.n_splits_ = n_splits
        return imp

    @property
    def has_splits_(self) -> bool:
        if not hasattr(self, "root_"):
            raise NotFittedError("fit the tree first")
        return not self.root_.is_leaf


class RandomForestClassifier(BaseEstimator, ClassifierMixin):
    """Bagged entropy trees with per-split feature subsampling and majority vote.

    Tree t draws everything from a generator seeded with ``random_state + t``,
    so fits are reproducible and trees could be grown in parallel without
    changing the result.
    """

    def __init__(
        self,
        n_estimators: int = 25,
        max_depth: int = 14,
        max_features: int | str | None = "sqrt",
        bootstrap: bool = True,
        random_state: int = 0,
    ):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state

    def _resolve_max_features(self, n: int) -> int | None:
        if self.max_features is None:
            return None
        if self.max_features == "sqrt":
            return int(np.ceil(np.sqrt(n)))
        if isinstance(self.max_features, (int, np.integer)) and 1 <= self.max_features <= n:
            return int(self.max_features)
        raise ConfigurationError(f"max_features must be None, 'sqrt' or 1..{n}, got {self.max_features!r}")

    def fit(self, X, y, class_count: int | None = None):
        if self.n_estimators < 1:
            raise ConfigurationError(f"n_estimators must be >= 1, got {self.n_estimators}")
        X = _as_matrix(X)
        y = np.asarray(y, dtype=np.int64)
        if y.shape[0] != X.shape[0]:
            raise ShapeError(f"{X.shape[0]} samples but {y.shape[0]} labels")
        self.n_features_in_ = X.shape[1]
        self.class_count_ = int(class_count if class_count is not None else y.max() + 1)
        mf = self._resolve_max_features(X.shape[1])
        m = X.shape[0]
        self.roots_ = []
        for t in range(self.n_estimators):
            rng = np.random.default_rng(self.random_state + t)
            rows = rng.integers(0, m, size=m) if self.bootstrap else np.arange(m)
            self.roots_.append(
                _grow(X, y, rows, 0, self.max_depth, self.class_count_, rng=rng, max_features=mf)
            )
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "roots_"):
            raise NotFittedError("fit the forest before predicting")
        X = _as_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"model expects {self.n_features_in_} features, got {X.shape[1]}")
        votes = np.zeros((X.shape[0], self.class_count_), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for root in self.roots_:
            votes[rows, _predict_from_root(root, X)] += 1
        return np.argmax(votes, axis=1)

    @property
    def feature_importances_(self) -> np.ndarray:
        if not hasattr(self, "roots_"):
            raise NotFittedError("fit the forest before asking for importances")
        acc = np.zeros(self.n_features_in_)
        for root in self.roots_:
            imp, _ = _tree_importance(root, self.n_features_in_)
            acc += imp
        total = acc.sum()
        return acc / total if total > 0 else acc
