"""Data-generating processes with known parameter values.

* `linear_gaussian`: `Y = β'X + ε` with three correlated normal covariates, `β_k ~ U[0, 2]` drawn per dataset;
  the variance of fitted values is `β'Σβ`.
* `saturated_categorical`: three independent 8-level covariates and a saturated log-linear model with
  512 coefficients; the Gini of `E[Y | X]` is known by enumerating the cells.
* `bernoulli_labels`: labels independent of the covariates, `P(Y = 1) = p`; the optimal ranking risk is `p(1-p)`.
* `randomized_treatment`: a coin-flip treatment with a constant additive effect.
"""

from __future__ import annotations as _annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from ..data import ColumnMeta, Dataset, design_matrix
from ..exceptions import ConfigurationError
from ..settings import DEFAULT_SEED

__all__ = (
    'DgpKind',
    'DgpSpec',
    'Sample',
    'LINEAR_GAUSSIAN_COV',
    'SATURATED_LEVELS',
    'gen_linear_gaussian',
    'saturated_coefficients',
    'gen_saturated',
    'true_gini_saturated',
    'true_varfv_saturated',
    'gen_bernoulli_labels',
    'gen_randomized_treatment',
    'indicator_truth',
    'draw',
    'TRUTH_KEYS',
)

DgpKind = Literal['linear_gaussian', 'saturated_categorical', 'bernoulli_labels', 'randomized_treatment']

LINEAR_GAUSSIAN_COV = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.5], [0.0, 0.5, 1.0]])
"""`Σ_ij = 1(i = j) + 0.5·1(|i - j| = 1)`."""

_LINEAR_NOISE_VARIANCE = 0.1

SATURATED_LEVELS = 8
_SATURATED_VARIABLES = 3
_SATURATED_INTERCEPT = 5.0

TRUTH_KEYS: dict[str, tuple[str, ...]] = {
    'linear_gaussian': ('varfv',),
    'saturated_categorical': ('iop', 'varfv'),
    'bernoulli_labels': ('ranking', 'varfv'),
    'randomized_treatment': ('contrast:difference', 'contrast:indicator'),
}
"""Parameters each DGP knows the true value of."""


@dataclass(frozen=True)
class DgpSpec:
    kind: DgpKind
    sigma: float = 0.1
    """Noise standard deviation of `ln Y` in the saturated design."""
    seed: int = DEFAULT_SEED
    p: float = 0.3
    """Label probability of `bernoulli_labels`."""
    effect: float = 1.0
    """Treatment effect of `randomized_treatment`."""

    def __post_init__(self) -> None:
        if self.kind not in ('linear_gaussian', 'saturated_categorical', 'bernoulli_labels', 'randomized_treatment'):
            raise ConfigurationError(f'Unknown DGP kind: {self.kind!r}')
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ConfigurationError(f'sigma must be positive, got {self.sigma}')
        if not 0.0 < self.p < 1.0:
            raise ConfigurationError(f'p must lie in (0, 1), got {self.p}')


@dataclass
class Sample:
    """A simulated dataset with the true values of the parameters it identifies."""

    data: Dataset
    truth: dict[str, float] = field(default_factory=dict)
    """Keyed by estimand: `varfv`, `iop`, `ranking`, `contrast:difference`, `contrast:indicator`."""


def _check_n(n: int) -> None:
    if n < 10:
        raise ConfigurationError(f'Simulated samples need n >= 10, got {n}')


def gen_linear_gaussian(n: int, seed: int = DEFAULT_SEED) -> tuple[Dataset, float]:
    """`Y = β1 X1 + β2 X2 + β3 X3 + ε` with `X ~ N(0, Σ)`, `ε ~ N(0, 1/10)` and `β_k ~ U[0, 2]`.

    Returns:
        The sample and the variance of fitted values `β'Σβ`.
    """
    _check_n(n)
    rng = np.random.default_rng(seed)
    beta = rng.uniform(0.0, 2.0, size=3)
    chol = np.linalg.cholesky(LINEAR_GAUSSIAN_COV)
    x = rng.standard_normal((n, 3)) @ chol.T
    y = x @ beta + rng.normal(0.0, math.sqrt(_LINEAR_NOISE_VARIANCE), size=n)
    return Dataset(y=y, x=x), float(beta @ LINEAR_GAUSSIAN_COV @ beta)


def saturated_coefficients() -> NDArray[np.float64]:
    """The 512 coefficients of the saturated design, in `design_matrix(order=3)` column order after the intercept.

    The intercept is 5, the 21 main effects alternate `0.2(-1)^{m+1}` and the 490 interaction coefficients
    decay as `1 / (2m²)`: the pairwise blocks `(1,2), (1,3), (2,3)` with levels scanned row-major, then the
    threewise block.
    """
    mains = _SATURATED_VARIABLES * (SATURATED_LEVELS - 1)
    interactions = SATURATED_LEVELS**_SATURATED_VARIABLES - 1 - mains
    m_main = np.arange(1, mains + 1)
    m_inter = np.arange(1, interactions + 1, dtype=np.float64)
    return np.concatenate(
        [
            [_SATURATED_INTERCEPT],
            0.2 * np.where(m_main % 2 == 1, 1.0, -1.0),
            1.0 / (2.0 * m_inter**2),
        ]
    )


def _saturated_meta() -> tuple[ColumnMeta, ...]:
    return tuple(
        ColumnMeta(f'x{k + 1}', kind='categorical', levels=SATURATED_LEVELS) for k in range(_SATURATED_VARIABLES)
    )


def _log_mean(codes: NDArray[np.float64], coefficients: NDArray[np.float64]) -> NDArray[np.float64]:
    cells = Dataset(y=np.ones(codes.shape[0]), x=codes, col_meta=_saturated_meta())
    return coefficients[0] + design_matrix(cells, interaction_order=_SATURATED_VARIABLES) @ coefficients[1:]


def gen_saturated(n: int, sigma: float = 0.1, seed: int = DEFAULT_SEED) -> Dataset:
    """Three uniform 8-level covariates and `ln Y = η(X) + N(0, σ²)` with the saturated coefficients."""
    _check_n(n)
    if not sigma > 0.0:
        raise ConfigurationError(f'sigma must be positive, got {sigma}')
    rng = np.random.default_rng(seed)
    codes = rng.integers(0, SATURATED_LEVELS, size=(n, _SATURATED_VARIABLES)).astype(np.float64)
    log_y = _log_mean(codes, saturated_coefficients()) + rng.normal(0.0, sigma, size=n)
    return Dataset(y=np.exp(log_y), x=codes, col_meta=_saturated_meta())


def _cell_means(sigma: float, coefficients: NDArray[np.float64] | None) -> NDArray[np.float64]:
    coefficients = saturated_coefficients() if coefficients is None else np.asarray(coefficients, dtype=np.float64)
    if coefficients.shape != (SATURATED_LEVELS**_SATURATED_VARIABLES,):
        expected = SATURATED_LEVELS**_SATURATED_VARIABLES
        raise ConfigurationError(f'Expected {expected} coefficients, got {coefficients.shape}')
    cells = np.array(list(itertools.product(range(SATURATED_LEVELS), repeat=_SATURATED_VARIABLES)), dtype=np.float64)
    return np.exp(_log_mean(cells, coefficients) + 0.5 * sigma * sigma)


def true_gini_saturated(sigma: float = 0.1, coefficients: NDArray[np.float64] | None = None) -> float:
    """Population Gini of `E[Y | X]` over the 512 equally likely cells, `Σ_{c,c'} |μ_c - μ_c'| / (2·512·Σ_c μ_c)`.

    `μ_c = exp(η_c + σ²/2)`; the factor `exp(σ²/2)` cancels, so the value does not depend on `σ`.
    """
    if not sigma > 0.0:
        raise ConfigurationError(f'sigma must be positive, got {sigma}')
    mu = np.sort(_cell_means(sigma, coefficients))
    cells = mu.shape[0]
    weights = 2.0 * np.arange(cells) - (cells - 1)
    return math.fsum((weights * mu).tolist()) / (cells * math.fsum(mu.tolist()))


def true_varfv_saturated(sigma: float = 0.1, coefficients: NDArray[np.float64] | None = None) -> float:
    """Population variance of `E[Y | X]` over the 512 cells."""
    return float(np.var(_cell_means(sigma, coefficients)))


def gen_bernoulli_labels(n: int, p: float = 0.3, seed: int = DEFAULT_SEED) -> Dataset:
    """Labels `Y ~ Bernoulli(p)` independent of three standard normal covariates, so `γ0 ≡ p`."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 3))
    y = (rng.uniform(size=n) < p).astype(np.float64)
    return Dataset(y=y, x=x)


def gen_randomized_treatment(n: int, seed: int = DEFAULT_SEED, effect: float = 1.0) -> Dataset:
    """`D ~ Bernoulli(1/2)` independent of `X ~ N(0, I_3)` and `Y = 1 + X1 + effect·D + N(0, 1)`."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 3))
    d = (rng.uniform(size=n) < 0.5).astype(np.float64)
    y = 1.0 + x[:, 0] + effect * d + rng.standard_normal(n)
    return Dataset(y=y, x=x, d=d)


def indicator_truth(effect: float) -> float:
    """`P(Y_i(1) >= Y_j(0))` for independent `i, j` in `randomized_treatment`: `Φ(effect / 2)`."""
    return float(stats.norm.cdf(effect / 2.0))


def draw(spec: DgpSpec, n: int, seed: int | None = None) -> Sample:
    """Draw one sample; `seed` overrides `spec.seed`."""
    seed = spec.seed if seed is None else seed
    if spec.kind == 'linear_gaussian':
        data, varfv = gen_linear_gaussian(n, seed)
        return Sample(data=data, truth={'varfv': varfv})
    if spec.kind == 'saturated_categorical':
        return Sample(
            data=gen_saturated(n, spec.sigma, seed),
            truth={'iop': true_gini_saturated(spec.sigma), 'varfv': true_varfv_saturated(spec.sigma)},
        )
    if spec.kind == 'bernoulli_labels':
        return Sample(
            data=gen_bernoulli_labels(n, spec.p, seed),
            truth={'ranking': spec.p * (1.0 - spec.p), 'varfv': 0.0},
        )
    return Sample(
        data=gen_randomized_treatment(n, seed, spec.effect),
        truth={'contrast:difference': spec.effect, 'contrast:indicator': indicator_truth(spec.effect)},
    )
