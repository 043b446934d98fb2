"""Second-order gradient boosting of regression trees under squared error."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DataError, ModelFileError, NumericError

FORMAT_TAG = "haulcast.gbrt"
FORMAT_VERSION = 1
# relative slack for the non-increasing training-loss check (float round-off only)
MSE_RTOL = 1e-12


@dataclass(frozen=True)
class GbrtConfig:
    n_estimators: int = 1000
    learning_rate: float = 0.01
    max_depth: int = 3
    lambda_reg: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0

    def __post_init__(self):
        if int(self.n_estimators) != self.n_estimators or self.n_estimators < 0:
            raise ConfigError(f"n_estimators must be a non-negative integer, got {self.n_estimators}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.max_depth) != self.max_depth or self.max_depth < 1:
            raise ConfigError(f"max_depth must be an integer >= 1, got {self.max_depth}")
        for name in ("lambda_reg", "gamma", "min_child_weight"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass
class Tree:
    """Flat node table; ``feature == -1`` marks a leaf.

    An internal node sends x left iff ``x[feature] < threshold``. ``cover``
    is the training hessian mass that reached the node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            r, n_act = rows[active], node[active]
            go_left = X[r, f[active]] < self.threshold[n_act]
            node[active] = np.where(go_left, self.left[n_act], self.right[n_act])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def expected_value(self) -> float:
        leaves = self.feature < 0
        return float(np.sum(self.value[leaves] * self.cover[leaves]) / self.cover[0])

    def to_dict(self) -> dict:
        return {
            "feature": [int(v) for v in self.feature],
            "threshold": [float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "value": [float(v) for v in self.value],
            "cover": [float(v) for v in self.cover],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        return cls(
            np.array(data["feature"], dtype=np.int64),
            np.array(data["threshold"], dtype=float),
            np.array(data["left"], dtype=np.int64),
            np.array(data["right"], dtype=np.int64),
            np.array(data["value"], dtype=float),
            np.array(data["cover"], dtype=float),
        )


@dataclass
class TreeEnsemble:
    base_score: float
    learning_rate: float
    trees: list[Tree]
    feature_names: list[str]
    config: GbrtConfig = field(default_factory=GbrtConfig)
    meta: dict = field(default_factory=dict)
    train_mse: list[float] = field(default_factory=list, compare=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise NumericError("non-finite feature values")
        return X

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def predict(ensemble: TreeEnsemble, row) -> float:
    """Prediction for a single feature vector."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1:
        raise DataError("predict expects one feature vector; use TreeEnsemble.predict for batches")
    return float(ensemble.predict(row)[0])


# ---------------------------------------------------------------------------
# training


def _best_split(X, g, h, order, config):
    """Exact greedy search over all features for one node.

    ``order`` is an (m, F) matrix of row ids, each column sorted by that
    feature. Returns (gain, feature, threshold) or None.
    """
    m, n_feat = order.shape
    if m < 2:
        return None
    cols = np.arange(n_feat)
    xs = X[order, cols]
    GL = np.cumsum(g[order], axis=0)[:-1]
    HL = np.cumsum(h[order], axis=0)[:-1]
    rows = order[:, 0]
    G, H = g[rows].sum(), h[rows].sum()
    GR, HR = G - GL, H - HL
    lam = config.lambda_reg
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam)) - config.gamma
    valid = (xs[1:] > xs[:-1]) & (HL >= config.min_child_weight) & (HR >= config.min_child_weight)
    gain = np.where(valid & np.isfinite(gain), gain, -np.inf)
    # row-major argmax over (feature, position): ties go to the lowest feature, then lowest threshold
    flat = int(np.argmax(gain.T))
    f, pos = divmod(flat, m - 1)
    best = gain[pos, f]
    if not best > 0:
        return None
    lo, hi = xs[pos, f], xs[pos + 1, f]
    threshold = lo + (hi - lo) / 2.0
    if not lo < threshold <= hi:
        threshold = hi
    return best, int(f), float(threshold)


def _grow_tree(X, g, h, root_order, config):
    feature, threshold, left, right, value, cover = [], [], [], [], [], []
    leaf_rows = []

    def new_node():
        for lst in (feature, threshold, left, right, value, cover):
            lst.append(0)
        feature[-1], left[-1], right[-1] = -1, -1, -1
        return len(feature) - 1

    root = new_node()
    stack = [(root, root_order, 0)]
    lam = config.lambda_reg
    while stack:
        node, order, depth = stack.pop()
        rows = order[:, 0]
        G, H = float(g[rows].sum()), float(h[rows].sum())
        cover[node] = H
        split = _best_split(X, g, h, order, config) if depth < config.max_depth else None
        if split is None:
            value[node] = -G / (H + lam) if H + lam > 0 else 0.0
            leaf_rows.append((node, rows))
            continue
        _, f, thr = split
        goes_left = np.zeros(len(X), dtype=bool)
        goes_left[rows] = X[rows, f] < thr
        mask = goes_left[order]
        n_left = int(mask[:, 0].sum())
        order_left = order.T[mask.T].reshape(order.shape[1], n_left).T
        order_right = order.T[~mask.T].reshape(order.shape[1], len(rows) - n_left).T
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(), new_node()
        # right pushed first so the left subtree is numbered and grown first
        stack.append((right[node], order_right, depth + 1))
        stack.append((left[node], order_left, depth + 1))
    tree = Tree(
        np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
        np.array(value, dtype=float), np.array(cover, dtype=float),
    )
    return tree, leaf_rows


def train_gbrt(
    X,
    y,
    config: GbrtConfig = GbrtConfig(),
    feature_names: Sequence[str] | None = None,
) -> TreeEnsemble:
    """Fit a boosted ensemble to (X, y) with squared-error gradients.

    Each round fits a depth-limited tree to g = prediction - y, h = 1 with
    leaf weights -G / (H + lambda), and adds ``learning_rate`` times its
    output. The per-round training MSE is recorded and must never increase.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise DataError("training matrix must be 2-D and non-empty")
    if len(y) != len(X):
        raise DataError("X and y differ in length")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite training features or targets")
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise DataError("feature_names length does not match X")

    base = float(np.mean(y))
    pred = np.full(len(y), base)
    h = np.ones(len(y))
    root_order = np.argsort(X, axis=0, kind="stable")
    trees, history = [], [float(np.mean((pred - y) ** 2))]
    for _ in range(config.n_estimators):
        g = pred - y
        tree, leaf_rows = _grow_tree(X, g, h, root_order, config)
        for node, rows in leaf_rows:
            pred[rows] += config.learning_rate * tree.value[node]
        trees.append(tree)
        mse = float(np.mean((pred - y) ** 2))
        if mse > history[-1] * (1.0 + MSE_RTOL):
            raise NumericError(f"training MSE increased at round {len(trees)}: {history[-1]} -> {mse}")
        history.append(mse)
    return TreeEnsemble(base, config.learning_rate, trees, names, config, train_mse=history)


# ---------------------------------------------------------------------------
# persistence


def save_ensemble(ensemble: TreeEnsemble, path: str | Path) -> Path:
    path = Path(path)
    doc = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "config": asdict(ensemble.config),
        "base_score": float(ensemble.base_score),
        "learning_rate": float(ensemble.learning_rate),
        "feature_names": list(ensemble.feature_names),
        "meta": ensemble.meta,
        "trees": [t.to_dict() for t in ensemble.trees],
    }
    path.write_text(json.dumps(doc) + "\n", encoding="utf-8")
    return path


def load_ensemble(path: str | Path) -> TreeEnsemble:
    path = Path(path)
    if not path.is_file():
        raise ModelFileError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ModelFileError(f"{path}: unreadable model file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
        raise ModelFileError(f"{path}: not a gradient-boosted tree model")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFileError(f"{path}: unsupported model version {doc.get('version')}")
    try:
        trees = [Tree.from_dict(t) for t in doc["trees"]]
        return TreeEnsemble(
            base_score=float(doc["base_score"]),
            learning_rate=float(doc["learning_rate"]),
            trees=trees,
            feature_names=list(doc["feature_names"]),
            config=GbrtConfig(**doc["config"]),
            meta=doc.get("meta", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: malformed model file ({exc})") from None
