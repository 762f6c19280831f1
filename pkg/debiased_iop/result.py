from __future__ import annotations as _annotations

import io
import math
from dataclasses import dataclass, field
from typing import Any, Literal

import pandas as pd
from pydantic import TypeAdapter

from ._utils import normal_quantile

__all__ = (
    'SCHEMA_VERSION',
    'Method',
    'Estimand',
    'Diagnostics',
    'EstimateResult',
    'EstimateResultTypeAdapter',
    'build_result',
)

SCHEMA_VERSION = 1
"""Version of the JSON and CSV layouts of [`EstimateResult`][debiased_iop.result.EstimateResult]."""

Method = Literal['plugin', 'debiased_np', 'debiased_general']
"""`plugin` substitutes `γ̂` into the identifying moment; the debiased methods add the first-step correction,
with `α̂ = δ(·, γ̂)` (`debiased_np`) or a separately estimated `α̂` (`debiased_general`)."""

Estimand = Literal['iop', 'varfv', 'ranking', 'contrast']


@dataclass
class Diagnostics:
    degenerate: bool = False
    """The first-order variance is numerically zero; the interval is unreliable."""
    negative_iop: bool = False
    """The Gini estimate is negative (reported as is, never truncated)."""
    first_stage_rmse: float | None = None
    """Out-of-fold RMSE of the first step when cross-fitted, in-sample RMSE otherwise."""
    tie_fraction: float | None = None
    """Share of pairs with equal full-sample fitted values."""
    sigma_hat: float | None = None
    invalid_se: bool = False
    """The standard error ignores first-step estimation and does not support valid inference."""
    crossfit: bool = False
    """Whether the point estimate is cross-fitted."""
    biased_correction: bool = False
    """The first-step correction has nonzero mean at the true nuisance (pairwise treatment-contrast weights)."""
    notes: list[str] = field(default_factory=list)


@dataclass
class EstimateResult:
    """A point estimate with its standard error and normal confidence interval."""

    estimand: Estimand
    method: Method
    theta: float
    se: float
    """`√(V̂/n)`."""
    ci_low: float
    ci_high: float
    level: float
    n: int
    learner: dict[str, Any]
    """Summary of the first-step learner."""
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    folds: int | None = None
    seed: int | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def ci(self) -> tuple[float, float]:
        return self.ci_low, self.ci_high

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_json(self, indent: int | None = 2) -> bytes:
        return EstimateResultTypeAdapter.dump_json(self, indent=indent)

    @classmethod
    def from_json(cls, data: str | bytes) -> EstimateResult:
        return EstimateResultTypeAdapter.validate_json(data)

    def record(self) -> dict[str, Any]:
        """Flat view used for CSV rows and text tables."""
        d = self.diagnostics
        return {
            'schema_version': self.schema_version,
            'estimand': self.estimand,
            'method': self.method,
            'learner': self.learner.get('kind', ''),
            'n': self.n,
            'folds': self.folds,
            'seed': self.seed,
            'theta': self.theta,
            'se': self.se,
            'ci_low': self.ci_low,
            'ci_high': self.ci_high,
            'level': self.level,
            'degenerate': d.degenerate,
            'negative_iop': d.negative_iop,
            'invalid_se': d.invalid_se,
            'first_stage_rmse': d.first_stage_rmse,
            'tie_fraction': d.tie_fraction,
        }

    def to_csv_row(self, header: bool = True) -> str:
        buffer = io.StringIO()
        pd.DataFrame([self.record()]).to_csv(buffer, index=False, header=header, float_format='%.17g')
        return buffer.getvalue()


EstimateResultTypeAdapter = TypeAdapter(EstimateResult)


def build_result(
    *,
    estimand: Estimand,
    method: Method,
    theta: float,
    variance: float,
    n: int,
    level: float,
    learner: dict[str, Any],
    diagnostics: Diagnostics,
    folds: int | None = None,
    seed: int | None = None,
) -> EstimateResult:
    """Attach `se = √(V̂/n)` and the interval `θ̂ ± z·se`."""
    se = math.sqrt(max(variance, 0.0) / n)
    half = normal_quantile(level) * se
    return EstimateResult(
        estimand=estimand,
        method=method,
        theta=theta,
        se=se,
        ci_low=theta - half,
        ci_high=theta + half,
        level=level,
        n=n,
        learner=learner,
        diagnostics=diagnostics,
        folds=folds,
        seed=seed,
    )
