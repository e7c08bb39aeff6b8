"""From-scratch interpretable models: multinomial logistic regression,
CART decision trees, and bagged random forests.

Training never standardizes or otherwise transforms its input; whatever
preprocessing the caller applied is what the model sees. All three
architectures train deterministically from a config seed and serialize to
versioned JSON.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .seeding import derive_seed
from .tabular import KIND_CATEGORICAL, Dataset

ARCHITECTURES = ("logreg", "dtree", "rforest")

MODEL_FORMAT = "ppverify-model"
MODEL_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparameters for all three architectures; unused fields are ignored.

    `n_features` is the per-tree feature subsample size for forests; None
    means round(sqrt(feature count)).
    """

    architecture: str = "logreg"
    seed: int = 0
    # logreg
    learning_rate: float = 0.1
    iterations: int = 1500
    l2: float = 1e-4
    # dtree / rforest
    max_depth: int = 8
    min_leaf: int = 5
    n_trees: int = 50
    n_features: int | None = None
    bootstrap: bool = True

    def validate(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.learning_rate <= 0 or self.iterations < 1 or self.l2 < 0:
            raise ConfigError("logreg needs learning_rate > 0, iterations >= 1, l2 >= 0")
        if self.max_depth < 1 or self.min_leaf < 1 or self.n_trees < 1:
            raise ConfigError("tree models need max_depth, min_leaf, n_trees >= 1")


def schema_fingerprint(feature_names) -> str:
    """Stable fingerprint of an ordered feature-name list."""
    text = "\x1f".join(feature_names)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class Predictor:
    """Interface shared by every trained model.

    `predict` returns the index into `class_values` of the most probable
    class (ties resolve to the lowest index); `class_values` holds the sorted
    distinct label values seen at training time.
    """

    architecture: str = ""

    def __init__(self, feature_names, class_values):
        self.feature_names = tuple(feature_names)
        self.class_values = np.asarray(class_values, dtype=float)
        self.schema_fingerprint = schema_fingerprint(self.feature_names)

    @property
    def n_classes(self) -> int:
        return self.class_values.size

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_distribution(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(np.asarray(x, dtype=float)[None, :])[0]

    def predict(self, x: np.ndarray) -> int:
        return int(np.argmax(self.predict_distribution(x)))

    def _payload(self) -> dict:
        raise NotImplementedError

    def to_payload(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "architecture": self.architecture,
            "feature_names": list(self.feature_names),
            "class_values": [float(v) for v in self.class_values],
            "params": self._payload(),
        }


# ---------------------------------------------------------------------------
# Multinomial logistic regression


def logreg_loss_grad(params: np.ndarray, X1: np.ndarray, Y: np.ndarray, l2: float):
    """Mean cross-entropy plus (l2/2)*||W||^2 and its gradient.

    `params` stacks the weight matrix over a bias row: shape (d+1, k).
    `X1` is the design matrix with a trailing column of ones. The bias row
    is not penalized.
    """
    n = X1.shape[0]
    Z = X1 @ params
    Z = Z - Z.max(axis=1, keepdims=True)
    expZ = np.exp(Z)
    P = expZ / expZ.sum(axis=1, keepdims=True)
    eps = 1e-12
    loss = -np.mean(np.sum(Y * np.log(P + eps), axis=1))
    penalty = params.copy()
    penalty[-1, :] = 0.0
    loss += 0.5 * l2 * float(np.sum(penalty * penalty))
    grad = X1.T @ (P - Y) / n + l2 * penalty
    return float(loss), grad


class LogisticRegressionModel(Predictor):
    """Softmax regression trained by full-batch gradient descent."""

    architecture = "logreg"

    def __init__(self, feature_names, class_values, weights, bias):
        super().__init__(feature_names, class_values)
        self.weights = np.asarray(weights, dtype=float)
        self.bias = np.asarray(bias, dtype=float)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        Z = np.asarray(X, dtype=float) @ self.weights + self.bias
        Z = Z - Z.max(axis=1, keepdims=True)
        expZ = np.exp(Z)
        return expZ / expZ.sum(axis=1, keepdims=True)

    def _payload(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}


def _fit_logreg(X, y_idx, feature_names, class_values, cfg: TrainConfig):
    n, d = X.shape
    k = class_values.size
    Y = np.zeros((n, k))
    Y[np.arange(n), y_idx] = 1.0
    X1 = np.column_stack([X, np.ones(n)])
    params = np.zeros((d + 1, k))
    for _ in range(cfg.iterations):
        _, grad = logreg_loss_grad(params, X1, Y, cfg.l2)
        params -= cfg.learning_rate * grad
    return LogisticRegressionModel(feature_names, class_values, params[:-1], params[-1])


# ---------------------------------------------------------------------------
# CART decision tree


@dataclass
class _TreeNodes:
    """Flat array representation of a grown tree."""

    feature: list = field(default_factory=list)  # -1 marks a leaf
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    dist: list = field(default_factory=list)  # class distribution per node


def _gini_from_counts(counts: np.ndarray, total) -> np.ndarray:
    p = counts / np.maximum(total, 1)
    return 1.0 - np.sum(p * p, axis=-1)


def _best_split(X, y_idx, node_idx, candidates, k, min_leaf):
    """Best (feature, threshold, weighted gini) over candidate features.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values; a split is valid only when both children keep at least
    `min_leaf` rows. Ties resolve to the earliest candidate feature and the
    lowest threshold, making growth deterministic.
    """
    n = node_idx.size
    labels = y_idx[node_idx]
    best = None  # (gini, feature, threshold)
    for f in candidates:
        order = np.argsort(X[node_idx, f], kind="stable")
        sv = X[node_idx[order], f]
        sy = labels[order]
        boundary = np.flatnonzero(sv[:-1] < sv[1:])  # split after position i
        if boundary.size == 0:
            continue
        onehot = np.zeros((n, k))
        onehot[np.arange(n), sy] = 1.0
        cum = np.cumsum(onehot, axis=0)
        left_counts = cum[boundary]
        total = cum[-1]
        right_counts = total - left_counts
        left_n = boundary + 1
        right_n = n - left_n
        valid = (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        gini = (
            left_n * _gini_from_counts(left_counts, left_n[:, None])
            + right_n * _gini_from_counts(right_counts, right_n[:, None])
        ) / n
        gini = np.where(valid, gini, np.inf)
        i = int(np.argmin(gini))
        if best is None or gini[i] < best[0] - 1e-15:
            thr = 0.5 * (sv[boundary[i]] + sv[boundary[i] + 1])
            best = (float(gini[i]), int(f), float(thr))
    return best


def _grow_tree(X, y_idx, k, cfg: TrainConfig, candidates) -> _TreeNodes:
    nodes = _TreeNodes()

    def add_node():
        nodes.feature.append(-1)
        nodes.threshold.append(0.0)
        nodes.left.append(-1)
        nodes.right.append(-1)
        nodes.dist.append(None)
        return len(nodes.feature) - 1

    def build(node_idx, depth):
        me = add_node()
        counts = np.bincount(y_idx[node_idx], minlength=k).astype(float)
        nodes.dist[me] = counts / node_idx.size
        pure = counts.max() == node_idx.size
        if depth >= cfg.max_depth or node_idx.size < 2 * cfg.min_leaf or pure:
            return me
        best = _best_split(X, y_idx, node_idx, candidates, k, cfg.min_leaf)
        if best is None:
            return me
        _, f, thr = best
        mask = X[node_idx, f] <= thr
        nodes.feature[me] = f
        nodes.threshold[me] = thr
        nodes.left[me] = build(node_idx[mask], depth + 1)
        nodes.right[me] = build(node_idx[~mask], depth + 1)
        return me

    build(np.arange(X.shape[0]), 0)
    return nodes


def _tree_proba(nodes: _TreeNodes, X: np.ndarray, k: int) -> np.ndarray:
    out = np.empty((X.shape[0], k))
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        f = nodes.feature[node]
        if f < 0:
            out[idx] = nodes.dist[node]
            continue
        mask = X[idx, f] <= nodes.threshold[node]
        stack.append((nodes.left[node], idx[mask]))
        stack.append((nodes.right[node], idx[~mask]))
    return out


class DecisionTreeModel(Predictor):
    """Greedy CART classifier split on Gini impurity."""

    architecture = "dtree"

    def __init__(self, feature_names, class_values, nodes: _TreeNodes):
        super().__init__(feature_names, class_values)
        self.nodes = nodes

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _tree_proba(self.nodes, np.asarray(X, dtype=float), self.n_classes)

    def _payload(self) -> dict:
        return {
            "feature": list(self.nodes.feature),
            "threshold": [float(t) for t in self.nodes.threshold],
            "left": list(self.nodes.left),
            "right": list(self.nodes.right),
            "dist": [[float(p) for p in d] for d in self.nodes.dist],
        }


def _fit_dtree(X, y_idx, feature_names, class_values, cfg: TrainConfig):
    candidates = np.arange(X.shape[1])
    nodes = _grow_tree(X, y_idx, class_values.size, cfg, candidates)
    return DecisionTreeModel(feature_names, class_values, nodes)


# ---------------------------------------------------------------------------
# Random forest


class RandomForestModel(Predictor):
    """Bagged CART trees with per-tree feature subsampling; mean-probability vote."""

    architecture = "rforest"

    def __init__(self, feature_names, class_values, trees):
        super().__init__(feature_names, class_values)
        self.trees = trees  # list of _TreeNodes

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        acc = np.zeros((X.shape[0], self.n_classes))
        for nodes in self.trees:
            acc += _tree_proba(nodes, X, self.n_classes)
        return acc / len(self.trees)

    def _payload(self) -> dict:
        return {
            "trees": [
                {
                    "feature": list(t.feature),
                    "threshold": [float(x) for x in t.threshold],
                    "left": list(t.left),
                    "right": list(t.right),
                    "dist": [[float(p) for p in d] for d in t.dist],
                }
                for t in self.trees
            ]
        }


def _fit_rforest(X, y_idx, feature_names, class_values, cfg: TrainConfig):
    n, d = X.shape
    m = cfg.n_features if cfg.n_features is not None else max(1, round(math.sqrt(d)))
    if not 1 <= m <= d:
        raise ConfigError(f"n_features must lie in [1, {d}], got {m}")
    trees = []
    for t in range(cfg.n_trees):
        rng = np.random.default_rng(derive_seed(cfg.seed, "tree", t))
        rows = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        candidates = np.sort(rng.choice(d, size=m, replace=False))
        trees.append(_grow_tree(X[rows], y_idx[rows], class_values.size, cfg, candidates))
    return RandomForestModel(feature_names, class_values, trees)


# ---------------------------------------------------------------------------
# Entry points


def _training_arrays(train: Dataset):
    if any(c.kind == KIND_CATEGORICAL for c in train.schema):
        raise DataError("training data still has categorical columns; encode them first")
    if np.isnan(train.values).any():
        raise DataError("training data still has missing cells; drop them first")
    if train.n_rows == 0:
        raise DataError("training set is empty")
    X = np.array(train.feature_matrix(), copy=True)
    labels = train.labels()
    class_values = np.unique(labels)
    if class_values.size < 2:
        raise DataError("training set holds a single class")
    y_idx = np.searchsorted(class_values, labels)
    return X, y_idx, class_values


def train(dataset: Dataset, cfg: TrainConfig) -> Predictor:
    """Train one model per `cfg.architecture` on an encoded, complete dataset."""
    cfg.validate()
    X, y_idx, class_values = _training_arrays(dataset)
    fit = {"logreg": _fit_logreg, "dtree": _fit_dtree, "rforest": _fit_rforest}[
        cfg.architecture
    ]
    return fit(X, y_idx, dataset.feature_names, class_values, cfg)


def predict_batch(m: Predictor, queries: Dataset):
    """Predict every query row; the label column is ignored.

    Returns a list of (class index, probability vector) pairs.
    """
    if schema_fingerprint(queries.feature_names) != m.schema_fingerprint:
        raise DataError(
            "query features do not match the model's training features: "
            f"{queries.feature_names!r}"
        )
    X = queries.feature_matrix()
    if np.isnan(X).any():
        raise DataError("queries contain missing cells")
    P = m.predict_proba(X)
    return [(int(np.argmax(row)), row) for row in P]


def save_model(m: Predictor, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(m.to_payload(), fh)
        fh.write("\n")


def _nodes_from_payload(p) -> _TreeNodes:
    return _TreeNodes(
        feature=list(p["feature"]),
        threshold=[float(t) for t in p["threshold"]],
        left=list(p["left"]),
        right=list(p["right"]),
        dist=[np.asarray(d, dtype=float) for d in p["dist"]],
    )


def model_from_payload(payload: dict) -> Predictor:
    if payload.get("format") != MODEL_FORMAT:
        raise DataError("not a model file")
    if payload.get("version") != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model version {payload.get('version')!r}")
    arch = payload["architecture"]
    names = payload["feature_names"]
    classes = payload["class_values"]
    params = payload["params"]
    if arch == "logreg":
        return LogisticRegressionModel(names, classes, params["weights"], params["bias"])
    if arch == "dtree":
        return DecisionTreeModel(names, classes, _nodes_from_payload(params))
    if arch == "rforest":
        trees = [_nodes_from_payload(t) for t in params["trees"]]
        return RandomForestModel(names, classes, trees)
    raise DataError(f"unknown architecture {arch!r} in model file")


def load_model(path: str) -> Predictor:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON ({exc})") from None
    return model_from_payload(payload)
