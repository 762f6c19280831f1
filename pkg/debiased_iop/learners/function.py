from __future__ import annotations as _annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ..data import OutcomeTransform
from ..exceptions import UsageError
from . import FittedModel, Learner

__all__ = ('FunctionLearner', 'FunctionModel', 'MeanLearner', 'MeanModel', 'constant_function')

FunctionDef = Callable[[NDArray[np.float64]], NDArray[np.float64]]
"""Maps an `(n, p)` design matrix to `n` level-scale predictions."""


@dataclass
class FunctionModel(FittedModel):
    """A first step fixed in advance, e.g. a known propensity score."""

    function: FunctionDef
    n_features: int
    label: str = 'function'

    def predict_raw(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        out = np.broadcast_to(np.asarray(self.function(x), dtype=np.float64), (x.shape[0],))
        return np.array(out)

    def summary(self) -> dict[str, Any]:
        return {'kind': self.label}


@dataclass(init=False)
class FunctionLearner(Learner):
    """A learner that ignores the training outcome and returns a fixed function.

    Apart from `__init__`, all methods match those of the base class.
    """

    function: FunctionDef
    label: str

    def __init__(self, function: FunctionDef, label: str = 'function'):
        self.function = function
        self.label = label

    def name(self) -> str:
        return self.label

    def fit(self, x: NDArray[np.float64], y: NDArray[np.float64]) -> FunctionModel:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise UsageError(f'x must be 2-dimensional, got shape {x.shape}')
        return FunctionModel(function=self.function, n_features=x.shape[1], label=self.label)


def constant_function(value: float) -> FunctionDef:
    """`x ↦ value` for every row."""

    def function(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.full(x.shape[0], value)

    return function


@dataclass
class MeanModel(FittedModel):
    intercept: float
    n_features: int
    transform: OutcomeTransform = 'none'

    def predict_raw(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.full(x.shape[0], self.intercept)

    def summary(self) -> dict[str, Any]:
        return {'kind': 'mean', 'transform': self.transform, 'intercept': self.intercept}


@dataclass(init=False)
class MeanLearner(Learner):
    """Intercept-only first step: every prediction is the training mean."""

    def __init__(self, *, transform: OutcomeTransform = 'none'):
        self.transform = transform

    def name(self) -> str:
        return 'mean'

    def fit(self, x: NDArray[np.float64], y: NDArray[np.float64]) -> MeanModel:
        x, target = self._prepare(x, y)
        return MeanModel(intercept=float(np.mean(target)), n_features=x.shape[1], transform=self.transform)
