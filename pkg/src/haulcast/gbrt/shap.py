"""Exact path-dependent Shapley attribution for tree ensembles.

The recursion tracks, along the current root-to-node path, every unique
feature together with the fraction of "feature absent" mass that flows
through (cover ratio, ``zero``) and whether x itself follows the path
(``one``). Path weights hold the Shapley permutation weights for every
subset size, so each leaf can credit its value to the path features in
O(depth^2). All per-row quantities are numpy vectors, which lets a single
walk over a tree explain many rows at once.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DataError, NumericError
from .trees import Tree, TreeEnsemble


@dataclass(frozen=True)
class ShapAttribution:
    phi: np.ndarray
    expected_value: float
    feature_names: tuple[str, ...] = ()

    def total(self) -> float:
        return float(self.expected_value + self.phi.sum())


@dataclass
class _Path:
    features: list[int]
    zeros: list[float]
    ones: list[np.ndarray]
    weights: list[np.ndarray]

    def copy(self) -> "_Path":
        return _Path(list(self.features), list(self.zeros), list(self.ones), list(self.weights))


def _extend(path: _Path, zero: float, one: np.ndarray, feature: int, n: int) -> _Path:
    p = path.copy()
    depth = len(p.features)
    p.features.append(feature)
    p.zeros.append(zero)
    p.ones.append(one)
    p.weights.append(np.ones(n) if depth == 0 else np.zeros(n))
    for i in range(depth - 1, -1, -1):
        p.weights[i + 1] = p.weights[i + 1] + one * p.weights[i] * (i + 1) / (depth + 1)
        p.weights[i] = zero * p.weights[i] * (depth - i) / (depth + 1)
    return p


def _unwind(path: _Path, k: int) -> _Path:
    """Remove path element k, undoing its contribution to the weights."""
    depth = len(path.features) - 1
    one, zero = path.ones[k], path.zeros[k]
    has_one = one != 0
    safe_one = np.where(has_one, one, 1.0)
    weights = list(path.weights)
    carry = weights[depth]
    for i in range(depth - 1, -1, -1):
        w_one = carry * (depth + 1) / ((i + 1) * safe_one)
        carry_one = weights[i] - w_one * zero * (depth - i) / (depth + 1)
        w_zero = weights[i] * (depth + 1) / (zero * (depth - i))
        weights[i] = np.where(has_one, w_one, w_zero)
        carry = np.where(has_one, carry_one, carry)
    return _Path(
        path.features[:k] + path.features[k + 1:],
        path.zeros[:k] + path.zeros[k + 1:],
        path.ones[:k] + path.ones[k + 1:],
        weights[:depth],
    )


def _unwound_sum(path: _Path, k: int) -> np.ndarray:
    """Total path weight that would remain if element k were unwound."""
    depth = len(path.features) - 1
    one, zero = path.ones[k], path.zeros[k]
    has_one = one != 0
    safe_one = np.where(has_one, one, 1.0)
    carry = path.weights[depth]
    total_one = np.zeros_like(carry)
    total_zero = np.zeros_like(carry)
    for i in range(depth - 1, -1, -1):
        tmp = carry / ((i + 1) * safe_one)
        total_one = total_one + tmp
        carry = path.weights[i] - tmp * zero * (depth - i)
        total_zero = total_zero + path.weights[i] / (zero * (depth - i))
    return np.where(has_one, total_one, total_zero) * (depth + 1)


def _tree_shap(tree: Tree, X: np.ndarray, phi: np.ndarray, scale: float) -> None:
    n = len(X)
    cover = tree.cover

    def recurse(node: int, path: _Path, zero: float, one: np.ndarray, feature: int):
        path = _extend(path, zero, one, feature, n)
        if tree.feature[node] < 0:
            leaf = scale * tree.value[node]
            for k in range(1, len(path.features)):
                w = _unwound_sum(path, k)
                phi[:, path.features[k]] += w * (path.ones[k] - path.zeros[k]) * leaf
            return
        split = int(tree.feature[node])
        goes_left = X[:, split] < tree.threshold[node]
        in_zero, in_one = 1.0, np.ones(n)
        if split in path.features:
            k = path.features.index(split)
            in_zero, in_one = path.zeros[k], path.ones[k]
            path = _unwind(path, k)
        lc, rc = tree.left[node], tree.right[node]
        recurse(lc, path, in_zero * cover[lc] / cover[node], in_one * goes_left, split)
        recurse(rc, path, in_zero * cover[rc] / cover[node], in_one * ~goes_left, split)

    recurse(0, _Path([], [], [], []), 1.0, np.ones(n), -1)


def expected_value(ensemble: TreeEnsemble) -> float:
    """Ensemble output averaged over the training distribution (cover-weighted)."""
    return float(ensemble.base_score + ensemble.learning_rate * sum(t.expected_value() for t in ensemble.trees))


def tree_shap_matrix(ensemble: TreeEnsemble, X) -> tuple[np.ndarray, float]:
    """Shapley values for every row of X; returns (phi of shape (n, F), expected value)."""
    X = ensemble._check(X)
    for tree in ensemble.trees:
        if tree.cover.size == 0 or np.any(tree.cover <= 0):
            raise DataError("ensemble lacks positive cover statistics; cannot attribute")
    phi = np.zeros(X.shape)
    for tree in ensemble.trees:
        if tree.n_nodes > 1:
            _tree_shap(tree, X, phi, ensemble.learning_rate)
    if not np.all(np.isfinite(phi)):
        raise NumericError("non-finite Shapley values")
    return phi, expected_value(ensemble)


def tree_shap(ensemble: TreeEnsemble, row) -> ShapAttribution:
    phi, base = tree_shap_matrix(ensemble, np.asarray(row, dtype=float)[None, :])
    return ShapAttribution(phi[0], base, tuple(ensemble.feature_names))


# ---------------------------------------------------------------------------
# summaries


def summarize_shap(phi, feature_names: Sequence[str]) -> list[tuple[str, float]]:
    """Features ranked by mean |phi|, descending; ties keep input order."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    if phi.size == 0 or len(phi) == 0:
        raise DataError("no attributions to summarize")
    if phi.shape[1] != len(feature_names):
        raise DataError("attribution width does not match feature names")
    mean_abs = np.abs(phi).mean(axis=0)
    order = sorted(range(len(feature_names)), key=lambda j: -mean_abs[j])
    return [(feature_names[j], float(mean_abs[j])) for j in order]


def write_shap_csvs(phi, X, feature_names: Sequence[str], out_dir: str | Path,
                    prefix: str = "shap") -> list[Path]:
    """Write ``<prefix>_values.csv`` (feature,value,phi) and ``<prefix>_summary.csv``."""
    out_dir = Path(out_dir)
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ranking = summarize_shap(phi, feature_names)
    values_path = out_dir / f"{prefix}_values.csv"
    with values_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("feature", "value", "phi"))
        for i in range(len(phi)):
            for j, name in enumerate(feature_names):
                writer.writerow((name, repr(float(X[i, j])), repr(float(phi[i, j]))))
    summary_path = out_dir / f"{prefix}_summary.csv"
    with summary_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("rank", "feature", "mean_abs_phi"))
        for rank, (name, value) in enumerate(ranking, start=1):
            writer.writerow((rank, name, repr(value)))
    return [values_path, summary_path]
