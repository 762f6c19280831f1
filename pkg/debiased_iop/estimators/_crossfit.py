"""Per-block first-step fits and cross-fitted pair sums shared by every debiased estimator."""

from __future__ import annotations as _annotations

import warnings
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any, Union

import logfire_api
import numpy as np
from joblib import Parallel, delayed
from numpy.typing import NDArray

from .._utils import stable_sum
from ..crossfit import FoldPartition, PairBlocks, make_pair_blocks, training_indices
from ..data import Dataset, design_matrix
from ..exceptions import ConfigurationError, DegenerateKernelWarning, UsageError
from ..learners import FittedModel, KnownLearnerName, Learner, LearnerSpec, infer_learner
from ..settings import EstimatorSettings
from ..ustat import PairKernel, block_sum, degeneracy_diagnostic

__all__ = (
    'LearnerLike',
    'BlockFits',
    'learner_design',
    'check_folds',
    'fit_blocks',
    'crossfit_sum',
    'tie_fraction',
    'check_degenerate',
    'learner_summary',
    'resolve_learner',
)

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')

LearnerLike = Union[Learner, LearnerSpec, KnownLearnerName]


def learner_design(data: Dataset, learner: Learner) -> NDArray[np.float64]:
    return design_matrix(data, learner.interaction_order)


def check_folds(data: Dataset, folds: FoldPartition) -> PairBlocks:
    if folds.n != data.n:
        raise UsageError(f'Fold partition covers {folds.n} observations, the data has {data.n}')
    if folds.K < 3:
        raise ConfigurationError(
            f'Debiased estimators need K >= 3 folds so every block has training data, got {folds.K}'
        )
    return make_pair_blocks(folds)


@dataclass
class BlockFits:
    """One first-step fit per block, with its predictions on the observations in the block."""

    blocks: PairBlocks
    models: list[FittedModel]
    values: NDArray[np.float64]
    """Shape `(L, n)`: row `l` holds `γ̂_l` on the members of block `l` and NaN elsewhere."""

    def out_of_fold_rmse(self, target: NDArray[np.float64]) -> float:
        """RMSE of the diagonal-block predictions, each made on a fold the model never saw."""
        folds = self.blocks.folds
        prediction = np.empty(folds.n)
        for k in range(folds.K):
            members = folds.members(k)
            prediction[members] = self.values[k, members]
        residual = target - prediction
        return float(np.sqrt(np.mean(residual * residual)))


def fit_blocks(
    learner: Learner,
    design: NDArray[np.float64],
    target: NDArray[np.float64],
    blocks: PairBlocks,
    *,
    n_jobs: int = 1,
    transform_values: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None,
) -> BlockFits:
    """Train the first step of every block on the block's training observations."""

    def one(l: int) -> tuple[FittedModel, NDArray[np.int64], NDArray[np.float64]]:  # noqa: E741
        train = training_indices(blocks, l)
        model = learner.fit(design[train], target[train])
        members = blocks[l].members
        prediction = model.predict(design[members])
        if transform_values is not None:
            prediction = transform_values(prediction)
        return model, members, prediction

    with _logfire.span('fit first step on {L} blocks', L=blocks.L, learner=learner.name()):
        if n_jobs > 1:
            fitted = Parallel(n_jobs=n_jobs, prefer='threads')(delayed(one)(l) for l in range(blocks.L))
        else:
            fitted = [one(l) for l in range(blocks.L)]
    values = np.full((blocks.L, design.shape[0]), np.nan)
    models = []
    for l, (model, members, prediction) in enumerate(fitted):  # noqa: E741
        values[l, members] = prediction
        models.append(model)
    return BlockFits(blocks=blocks, models=models, values=values)


def crossfit_sum(
    blocks: PairBlocks,
    kernel_for_block: Callable[[int], PairKernel],
    settings: EstimatorSettings,
) -> float:
    """`Σ_l Σ_{(i,j) ∈ I_l} k_l(i, j)`, folded in block order."""
    chunk = settings['chunk_elements']

    def one(l: int) -> float:  # noqa: E741
        return float(block_sum(kernel_for_block(l), blocks[l], chunk_elements=chunk))

    if settings['n_jobs'] > 1:
        parts = Parallel(n_jobs=settings['n_jobs'], prefer='threads')(delayed(one)(l) for l in range(blocks.L))
    else:
        parts = [one(l) for l in range(blocks.L)]
    return stable_sum(parts)


def tie_fraction(values: NDArray[np.float64]) -> float:
    """Share of pairs `i < j` with `values[i] == values[j]`."""
    n = values.shape[0]
    _, counts = np.unique(values, return_counts=True)
    ties = int(np.sum(counts * (counts - 1) // 2))
    return ties / (n * (n - 1) // 2)


def learner_summary(learner: Learner, spec: Any) -> dict[str, Any]:
    if isinstance(spec, LearnerSpec):
        return spec.summary()
    return learner.summary()


def resolve_learner(spec: LearnerLike) -> Learner:
    # block fits are parallel across blocks, so learners themselves run single-threaded
    return infer_learner(spec, n_jobs=1)


def check_degenerate(sigma: float, scale: float, settings: EstimatorSettings) -> tuple[bool, list[str]]:
    """Flag a numerically zero first-order variance, warning once through logfire and once as a Python warning."""
    if not degeneracy_diagnostic(sigma, scale, settings['degeneracy_tol']):
        return False, []
    _logfire.warn('degenerate U-statistic kernel: sigma_hat={sigma}', sigma=sigma)
    warnings.warn(
        'Degenerate kernel: the estimated first-order variance is numerically zero',
        DegenerateKernelWarning,
        stacklevel=3,
    )
    return True, ['first-order variance is numerically zero; the confidence interval is unreliable']
