"""Independent reference computations used by the tests.

Nothing here imports the code paths it checks: Shapley values come from
explicit subset enumeration, rolling features from plain Python loops.
"""

from itertools import combinations
from math import factorial

import numpy as np


def conditional_expectation(tree, x, subset):
    """E[tree(x) | x_S] with features outside S averaged by training cover."""

    def walk(node):
        f = tree.feature[node]
        if f < 0:
            return tree.value[node]
        left, right = tree.left[node], tree.right[node]
        if f in subset:
            return walk(left if x[f] < tree.threshold[node] else right)
        return (tree.cover[left] * walk(left) + tree.cover[right] * walk(right)) / tree.cover[node]

    return walk(0)


def ensemble_value(ensemble, x, subset):
    return ensemble.base_score + ensemble.learning_rate * sum(
        conditional_expectation(t, x, subset) for t in ensemble.trees
    )


def brute_force_shapley(ensemble, x):
    """Shapley values by enumerating all 2^F coalitions."""
    n_feat = len(x)
    phi = np.zeros(n_feat)
    cache = {}

    def value(subset):
        key = frozenset(subset)
        if key not in cache:
            cache[key] = ensemble_value(ensemble, x, key)
        return cache[key]

    for j in range(n_feat):
        others = [k for k in range(n_feat) if k != j]
        for size in range(n_feat):
            weight = factorial(size) * factorial(n_feat - size - 1) / factorial(n_feat)
            for subset in combinations(others, size):
                phi[j] += weight * (value(set(subset) | {j}) - value(set(subset)))
    return phi, value(set())


def brute_force_features(payload, trucks, rain):
    """Recompute lag/rolling features for every emitted row t = 5..n-2 with loops."""
    rows = []
    n = len(payload)
    for t in range(5, n - 1):
        rows.append({
            "payload_lag1": payload[t - 1],
            "payload_rolling_sum_4": sum(payload[t - 3 : t + 1]),
            "working_trucks_lag1": trucks[t - 1],
            "working_trucks_mean4": sum(trucks[t - 3 : t + 1]) / 4.0,
            "precipitation_sum6": sum(rain[t - 5 : t + 1]),
            "precipitation_next": rain[t + 1],
            "target_next_payload": payload[t + 1],
        })
    return rows


def silverman_bandwidth(values):
    """1.06 * min(sample std, IQR / 1.34) * n^(-1/5) evaluated term by term."""
    v = sorted(float(a) for a in values)
    n = len(v)
    mean = sum(v) / n
    std = (sum((a - mean) ** 2 for a in v) / (n - 1)) ** 0.5

    def quantile(q):
        pos = q * (n - 1)
        lo = int(pos)
        hi = min(lo + 1, n - 1)
        return v[lo] + (v[hi] - v[lo]) * (pos - lo)

    iqr = quantile(0.75) - quantile(0.25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    return 1.06 * spread * n ** (-0.2)
