"""First-step regression learners.

The aim here is a common interface for every first step, so that estimators can be agnostic to whether
`γ̂` comes from a penalized linear model, a random forest or a known function.
"""

from __future__ import annotations as _annotations

import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from typing import Any, Literal, Union

import numpy as np
from numpy.typing import NDArray

from .._utils import as_float_array
from ..data import OutcomeTransform, check_transform
from ..exceptions import ConfigurationError, UsageError
from ..settings import DEFAULT_SEED

__all__ = (
    'LearnerKind',
    'KnownLearnerName',
    'FixedPenalty',
    'CvPenalty',
    'Penalty',
    'ForestParams',
    'LearnerSpec',
    'CvReport',
    'FittedModel',
    'Learner',
    'infer_learner',
    'fit',
    'predict',
    'cv_tune',
    'rmse',
)

LearnerKind = Literal['ridge', 'lasso', 'random_forest', 'mean']

KnownLearnerName = Literal['ridge', 'lasso', 'random_forest', 'rf', 'mean']
"""Names accepted wherever a learner is expected, e.g. by the `--learner` flag."""


@dataclass(frozen=True)
class FixedPenalty:
    """Use a single penalty `λ ≥ 0`."""

    lam: float

    def __post_init__(self) -> None:
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ConfigurationError(f'Penalty must be a finite number >= 0, got {self.lam}')


@dataclass(frozen=True)
class CvPenalty:
    """Choose `λ` by K-fold cross-validation."""

    grid: tuple[float, ...] | None = None
    """Candidate penalties; `None` uses 100 log-spaced values on `[λ_max·1e-4, λ_max]`."""
    folds: int = 10
    seed: int = DEFAULT_SEED
    """Seed of the CV fold shuffle."""

    def __post_init__(self) -> None:
        if self.grid is not None:
            if len(self.grid) == 0:
                raise ConfigurationError('The CV grid must not be empty')
            if any(not (lam > 0.0 and math.isfinite(lam)) for lam in self.grid):
                raise ConfigurationError('CV grid values must be finite and strictly positive')
        if self.folds < 2:
            raise ConfigurationError(f'CV needs at least 2 folds, got {self.folds}')


Penalty = Union[FixedPenalty, CvPenalty]


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry: int | None = None
    """Columns sampled per split; `None` means `max(1, ⌈p/3⌉)`."""
    min_node: int = 5
    """Minimum number of observations in each leaf."""
    seed: int = DEFAULT_SEED
    """Tree `t` uses seed `seed + t`."""
    bootstrap: bool = True
    """Grow each tree on a bootstrap resample; `False` uses the training rows as they are."""

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ConfigurationError(f'n_trees must be at least 1, got {self.n_trees}')
        if self.mtry is not None and self.mtry < 1:
            raise ConfigurationError(f'mtry must be at least 1, got {self.mtry}')
        if self.min_node < 1:
            raise ConfigurationError(f'min_node must be at least 1, got {self.min_node}')


@dataclass(frozen=True)
class LearnerSpec:
    """A first-step learner choice with its hyperparameters."""

    kind: LearnerKind
    penalty: Penalty = field(default_factory=CvPenalty)
    rf_params: ForestParams = field(default_factory=ForestParams)
    transform: OutcomeTransform = 'none'
    interaction_order: int = 1
    """Interaction order of the dummy dictionary built from categorical covariates."""

    def __post_init__(self) -> None:
        if self.kind not in ('ridge', 'lasso', 'random_forest', 'mean'):
            raise ConfigurationError(f'Unknown learner kind: {self.kind!r}')
        if self.transform not in ('none', 'log_exp'):
            raise ConfigurationError(f'Unknown outcome transform: {self.transform!r}')
        if self.interaction_order < 1:
            raise ConfigurationError(f'interaction_order must be at least 1, got {self.interaction_order}')

    def summary(self) -> dict[str, Any]:
        out: dict[str, Any] = {'kind': self.kind, 'transform': self.transform}
        if self.interaction_order > 1:
            out['interaction_order'] = self.interaction_order
        if self.kind in ('ridge', 'lasso'):
            out['penalty'] = {'mode': 'fixed' if isinstance(self.penalty, FixedPenalty) else 'cv'} | asdict(
                self.penalty
            )
        elif self.kind == 'random_forest':
            out['rf_params'] = asdict(self.rf_params)
        return out


@dataclass
class CvReport:
    """Cross-validated RMSE along a penalty grid, on the transform scale."""

    grid: list[float]
    rmse: list[float]
    chosen: float
    folds: int = 10


class FittedModel(ABC):
    """A trained first step `γ̂(·)`. Prediction is deterministic and the model is never mutated."""

    transform: OutcomeTransform = 'none'
    n_features: int

    @abstractmethod
    def predict_raw(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Predictions on the transform scale."""
        raise NotImplementedError()

    @abstractmethod
    def summary(self) -> dict[str, Any]:
        """A JSON-friendly description of the model."""
        raise NotImplementedError()

    def predict(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Level-scale predictions.

        Raises:
            UsageError: `x` does not have the training column count.
        """
        x = as_float_array(x, 2, 'x')
        if x.shape[1] != self.n_features:
            raise UsageError(f'Model was trained on {self.n_features} columns, got {x.shape[1]}')
        raw = self.predict_raw(x)
        return np.exp(raw) if self.transform == 'log_exp' else raw


class Learner(ABC):
    """Abstract first-step learner."""

    transform: OutcomeTransform = 'none'
    interaction_order: int = 1

    @abstractmethod
    def fit(self, x: NDArray[np.float64], y: NDArray[np.float64]) -> FittedModel:
        """Fit on level-scale `y`; the learner applies its own outcome transform."""
        raise NotImplementedError()

    @abstractmethod
    def name(self) -> str:
        raise NotImplementedError()

    def cv_tune(self, x: NDArray[np.float64], y: NDArray[np.float64]) -> CvReport:
        raise ConfigurationError(f'Learner {self.name()!r} has no penalty to tune')

    def summary(self) -> dict[str, Any]:
        return {'kind': self.name(), 'transform': self.transform}

    def _prepare(self, x: object, y: object) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        x = as_float_array(x, 2, 'x')
        y = as_float_array(y, 1, 'y')
        if x.shape[0] != y.shape[0]:
            raise UsageError(f'x has {x.shape[0]} rows but y has {y.shape[0]} entries')
        if y.shape[0] < 2:
            raise UsageError(f'At least 2 observations are required to fit, got {y.shape[0]}')
        check_transform(self.transform, y)
        return x, (np.log(y) if self.transform == 'log_exp' else y)


def infer_learner(
    learner: Learner | LearnerSpec | KnownLearnerName, *, n_jobs: int = 1
) -> Learner:
    """Infer the learner from a spec or a name."""
    if isinstance(learner, Learner):
        return learner
    if isinstance(learner, str):
        name = 'random_forest' if learner == 'rf' else learner
        if name not in ('ridge', 'lasso', 'random_forest', 'mean'):
            raise ConfigurationError(f'Unknown learner: {learner}')
        learner = LearnerSpec(kind=name)  # pyright: ignore[reportArgumentType]

    if learner.kind == 'ridge':
        from .linear import RidgeLearner

        out: Learner = RidgeLearner(learner.penalty, transform=learner.transform)
    elif learner.kind == 'lasso':
        from .linear import LassoLearner

        out = LassoLearner(learner.penalty, transform=learner.transform)
    elif learner.kind == 'random_forest':
        from .forest import ForestLearner

        out = ForestLearner(learner.rf_params, transform=learner.transform, n_jobs=n_jobs)
    else:
        from .function import MeanLearner

        out = MeanLearner(transform=learner.transform)
    out.interaction_order = learner.interaction_order
    return out


def fit(
    spec: Learner | LearnerSpec | KnownLearnerName, x: NDArray[np.float64], y: NDArray[np.float64], *, n_jobs: int = 1
) -> FittedModel:
    """Fit a first step."""
    return infer_learner(spec, n_jobs=n_jobs).fit(x, y)


def predict(model: FittedModel, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Level-scale predictions of a fitted first step."""
    return model.predict(x)


def cv_tune(spec: Learner | LearnerSpec | KnownLearnerName, x: NDArray[np.float64], y: NDArray[np.float64]) -> CvReport:
    """Cross-validate the penalty of a ridge or lasso learner.

    Raises:
        ConfigurationError: The learner has no penalty or `n` is smaller than the number of CV folds.
    """
    return infer_learner(spec).cv_tune(x, y)


def rmse(model: FittedModel, x: NDArray[np.float64], y: NDArray[np.float64]) -> float:
    """Root mean squared error of level-scale predictions."""
    y = as_float_array(y, 1, 'y')
    residual = y - model.predict(x)
    if residual.shape != y.shape:
        raise UsageError('x and y have different lengths')
    return float(np.sqrt(np.mean(residual * residual)))
