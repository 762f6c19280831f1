"""Random forest regression: CART trees grown on bootstrap resamples with per-split column sampling.

Tree growth and traversal are compiled with numba and release the GIL, so trees are grown on a thread pool.
Tree `t` draws its bootstrap sample and its column samples from seed `seed + t`; the forest is therefore
identical for any number of workers.
"""

from __future__ import annotations as _annotations

import math
from dataclasses import dataclass, field
from typing import Any

import logfire_api
import numpy as np
from joblib import Parallel, delayed
from numba import njit
from numpy.typing import NDArray

from ..data import OutcomeTransform
from ..exceptions import ConfigurationError
from . import FittedModel, ForestParams, Learner

__all__ = ('Tree', 'ForestModel', 'ForestLearner')

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')


@njit(cache=True, nogil=True)
def _grow_tree(x, y, rows, mtry, min_node, seed):  # pragma: no cover
    np.random.seed(seed)
    m_total = rows.shape[0]
    p = x.shape[1]
    capacity = 2 * m_total + 1
    feature = np.full(capacity, -1, dtype=np.int64)
    threshold = np.zeros(capacity)
    left = np.full(capacity, -1, dtype=np.int64)
    right = np.full(capacity, -1, dtype=np.int64)
    value = np.zeros(capacity)
    start = np.zeros(capacity, dtype=np.int64)
    stop = np.zeros(capacity, dtype=np.int64)
    stack = np.empty(capacity, dtype=np.int64)
    idx = rows.copy()
    scratch = np.empty(m_total, dtype=np.int64)
    column_x = np.empty(m_total)
    columns = np.arange(p)

    stop[0] = m_total
    stack[0] = 0
    top = 1
    count = 1
    while top > 0:
        top -= 1
        node = stack[top]
        s = start[node]
        e = stop[node]
        m = e - s
        total = 0.0
        total_sq = 0.0
        for k in range(s, e):
            v = y[idx[k]]
            total += v
            total_sq += v * v
        value[node] = total / m
        if m < 2 * min_node:
            continue
        sse = total_sq - total * total / m
        if sse <= 1e-12 * total_sq:
            continue

        np.random.shuffle(columns)
        best_gain = 1e-12 * sse
        best_feature = -1
        best_threshold = 0.0
        for c in range(mtry):
            f = columns[c]
            for k in range(m):
                column_x[k] = x[idx[s + k], f]
            order = np.argsort(column_x[:m], kind='mergesort')
            left_sum = 0.0
            for k in range(1, m):
                left_sum += y[idx[s + order[k - 1]]]
                if k < min_node or m - k < min_node:
                    continue
                lo = column_x[order[k - 1]]
                hi = column_x[order[k]]
                if lo == hi:
                    continue
                right_sum = total - left_sum
                gain = left_sum * left_sum / k + right_sum * right_sum / (m - k) - total * total / m
                if gain > best_gain:
                    best_gain = gain
                    best_feature = f
                    cut = lo + 0.5 * (hi - lo)
                    best_threshold = cut if cut < hi else lo
        if best_feature < 0:
            continue

        n_left = 0
        for k in range(s, e):
            if x[idx[k], best_feature] <= best_threshold:
                scratch[n_left] = idx[k]
                n_left += 1
        n_right = 0
        for k in range(s, e):
            if x[idx[k], best_feature] > best_threshold:
                scratch[n_left + n_right] = idx[k]
                n_right += 1
        for k in range(m):
            idx[s + k] = scratch[k]

        left_node = count
        right_node = count + 1
        count += 2
        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = left_node
        right[node] = right_node
        start[left_node] = s
        stop[left_node] = s + n_left
        start[right_node] = s + n_left
        stop[right_node] = e
        stack[top] = right_node
        top += 1
        stack[top] = left_node
        top += 1

    return (
        feature[:count].copy(),
        threshold[:count].copy(),
        left[:count].copy(),
        right[:count].copy(),
        value[:count].copy(),
    )


@njit(cache=True, nogil=True)
def _accumulate_tree(x, feature, threshold, left, right, value, out):  # pragma: no cover
    for i in range(x.shape[0]):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


@dataclass
class Tree:
    """Flat binary tree; `feature[node] == -1` marks a leaf holding the mean `value[node]`."""

    feature: NDArray[np.int64]
    threshold: NDArray[np.float64]
    left: NDArray[np.int64]
    right: NDArray[np.int64]
    value: NDArray[np.float64]

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))


@dataclass
class ForestModel(FittedModel):
    trees: list[Tree]
    params: ForestParams
    mtry: int
    n_features: int
    transform: OutcomeTransform = 'none'

    def predict_raw(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        x = np.ascontiguousarray(x, dtype=np.float64)
        out = np.zeros(x.shape[0])
        for tree in self.trees:
            _accumulate_tree(x, tree.feature, tree.threshold, tree.left, tree.right, tree.value, out)
        return out / len(self.trees)

    def summary(self) -> dict[str, Any]:
        return {
            'kind': 'random_forest',
            'transform': self.transform,
            'n_trees': len(self.trees),
            'mtry': self.mtry,
            'min_node': self.params.min_node,
            'seed': self.params.seed,
            'bootstrap': self.params.bootstrap,
            'mean_leaves': float(np.mean([tree.n_leaves for tree in self.trees])),
        }


@dataclass(init=False)
class ForestLearner(Learner):
    params: ForestParams = field(default_factory=ForestParams)
    n_jobs: int = 1

    def __init__(
        self, params: ForestParams | None = None, *, transform: OutcomeTransform = 'none', n_jobs: int = 1
    ):
        self.params = params or ForestParams()
        self.transform = transform
        self.n_jobs = n_jobs

    def name(self) -> str:
        return 'random_forest'

    def summary(self) -> dict[str, Any]:
        return {'kind': 'random_forest', 'transform': self.transform, 'n_trees': self.params.n_trees}

    def fit(self, x: NDArray[np.float64], y: NDArray[np.float64]) -> ForestModel:
        x, target = self._prepare(x, y)
        n, p = x.shape
        if p == 0:
            raise ConfigurationError('A random forest needs at least one covariate column')
        mtry = self.params.mtry if self.params.mtry is not None else max(1, math.ceil(p / 3))
        if mtry > p:
            raise ConfigurationError(f'mtry={mtry} exceeds the number of columns p={p}')
        x = np.ascontiguousarray(x)
        target = np.ascontiguousarray(target)
        with _logfire.span('fit {kind} learner', kind='random_forest', n=n, p=p, n_trees=self.params.n_trees):
            if self.n_jobs > 1 and self.params.n_trees > 1:
                trees = Parallel(n_jobs=self.n_jobs, prefer='threads')(
                    delayed(self._grow)(x, target, t, mtry) for t in range(self.params.n_trees)
                )
            else:
                trees = [self._grow(x, target, t, mtry) for t in range(self.params.n_trees)]
        return ForestModel(trees=list(trees), params=self.params, mtry=mtry, n_features=p, transform=self.transform)

    def _grow(self, x: NDArray[np.float64], y: NDArray[np.float64], t: int, mtry: int) -> Tree:
        seed = self.params.seed + t
        n = x.shape[0]
        if self.params.bootstrap:
            rows = np.random.default_rng(seed).integers(0, n, size=n).astype(np.int64)
        else:
            rows = np.arange(n, dtype=np.int64)
        arrays = _grow_tree(x, y, rows, mtry, self.params.min_node, seed % (1 << 32))
        return Tree(*arrays)
