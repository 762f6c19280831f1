"""The correction weight `α̂(x_i, x_j)` multiplying the first-step residual in the debiased moments.

Four representations are supported:

* `pairwise`: `α̂ = δ(·, γ̂)`, the joint nonparametric case; for the Gini and ranking kernels
  `δ = sgn(γ̂(x_i) - γ̂(x_j))`, for treatment contrasts the derivative of the weighted kernel in `γ̂(x_i)`;
* `additive`: `α̂ = α̂01(x_i) + α̂02(x_j) - E_n[δ]`, each component the regression on `X` of the leave-one-out
  averages of `δ` over the training pairs;
* `projection`: a single per-observation weight `α̂(x_i)`, the regression on `X` of the leave-one-out averages
  of `δ`, multiplying observation `i`'s own first-step residual (treatment contrasts);
* `zero`: no correction.
"""

from __future__ import annotations as _annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .._utils import sgn
from ..exceptions import UsageError
from ..learners import FittedModel, Learner

__all__ = ('AlphaKind', 'AlphaModel', 'AlphaValues', 'sign_balance', 'fit_additive_alpha')

AlphaKind = Literal['pairwise', 'additive', 'projection', 'zero']


@dataclass
class AlphaValues:
    """`α̂` evaluated at the observations: per-observation arrays combined pair by pair."""

    kind: AlphaKind
    gamma: NDArray[np.float64] | None = None
    first: NDArray[np.float64] | None = None
    second: NDArray[np.float64] | None = None
    constant: float = 0.0

    @property
    def antisymmetric(self) -> bool:
        return self.kind in ('pairwise', 'zero')

    def pair(self, i: NDArray[np.int64], j: NDArray[np.int64]) -> NDArray[np.float64]:
        if self.kind == 'pairwise':
            assert self.gamma is not None
            return sgn(self.gamma[i] - self.gamma[j])
        if self.kind == 'additive':
            assert self.first is not None and self.second is not None
            return self.first[i] + self.second[j] - self.constant
        if self.kind == 'projection':
            raise UsageError('Projection weights apply to one observation at a time, not to a pair')
        return np.zeros(np.broadcast_shapes(np.shape(i), np.shape(j)))


@dataclass
class AlphaModel:
    """A fitted `α̂`."""

    kind: AlphaKind
    first: FittedModel | None = None
    """`α̂01` in the additive case, `α̂(x)` in the projection case."""
    second: FittedModel | None = None
    """`α̂02`, additive case."""
    constant: float = 0.0
    """`E_n[δ_ij(γ̂)]` over the training pairs, additive case."""

    def evaluate(self, gamma: NDArray[np.float64], design: NDArray[np.float64] | None = None) -> AlphaValues:
        """Evaluate at observations with fitted first-step values `gamma` and alpha-learner design `design`."""
        if self.kind == 'additive':
            assert self.first is not None and self.second is not None and design is not None
            return AlphaValues(
                kind='additive',
                first=self.first.predict(design),
                second=self.second.predict(design),
                constant=self.constant,
            )
        if self.kind == 'projection':
            assert self.first is not None and design is not None
            return AlphaValues(kind='projection', first=self.first.predict(design))
        return AlphaValues(kind=self.kind, gamma=gamma)


def sign_balance(values: NDArray[np.float64]) -> NDArray[np.float64]:
    """`Σ_{j≠i} sgn(v_i - v_j)` for every `i`, by sorting: `#{v_j < v_i} - #{v_j > v_i}`."""
    ordered = np.sort(values)
    below = np.searchsorted(ordered, values, side='left')
    above = values.shape[0] - np.searchsorted(ordered, values, side='right')
    return (below - above).astype(np.float64)


def fit_additive_alpha(
    learner: Learner,
    gamma_train: NDArray[np.float64],
    design_train: NDArray[np.float64],
) -> AlphaModel:
    """Fit the additive `α̂` on a training set.

    The targets are `α̃1(X_i) = n_l^{-1} Σ_{j≠i} δ_ij` and `α̃2(X_j) = n_l^{-1} Σ_{i≠j} δ_ij` with
    `δ_ij = sgn(γ̂(X_i) - γ̂(X_j))` over the training observations.
    """
    m = gamma_train.shape[0]
    balance = sign_balance(gamma_train)
    first_target = balance / m
    second_target = -balance / m
    constant = float(np.sum(balance)) / (m * (m - 1))
    first = learner.fit(design_train, first_target)
    second = learner.fit(design_train, second_target)
    return AlphaModel(kind='additive', first=first, second=second, constant=constant)
