from __future__ import annotations

import os

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing_extensions import TypedDict

__all__ = (
    'DEFAULT_SEED',
    'DEFAULT_FOLDS',
    'EstimatorSettings',
    'DEFAULT_ESTIMATOR_SETTINGS',
    'merge_estimator_settings',
    'resolve_estimator_settings',
    'RuntimeSettings',
)

DEFAULT_SEED = 42
"""Seed used when the caller does not pick one."""

DEFAULT_FOLDS = 5
"""Number of cross-fitting folds used when the caller does not pick one."""


class EstimatorSettings(TypedDict, total=False):
    """Settings shared by every estimator.

    Any key left out falls back to [`DEFAULT_ESTIMATOR_SETTINGS`][debiased_iop.settings.DEFAULT_ESTIMATOR_SETTINGS].
    """

    level: float
    """Confidence level of the reported interval, strictly between 0 and 1."""

    n_jobs: int
    """Worker threads for pair reductions and block fits. Results do not depend on it."""

    chunk_elements: int
    """Upper bound on the number of pair-kernel values held in memory at once."""

    propensity_clip: float
    """Propensity scores are clamped to `[clip, 1 - clip]` in treatment contrasts."""

    degeneracy_tol: float
    """Relative tolerance under which the first-order variance is reported as degenerate."""


DEFAULT_ESTIMATOR_SETTINGS: EstimatorSettings = {
    'level': 0.95,
    'n_jobs': 1,
    'chunk_elements': 1 << 22,
    'propensity_clip': 0.01,
    'degeneracy_tol': 1e-10,
}


def merge_estimator_settings(
    base: EstimatorSettings | None, overrides: EstimatorSettings | None
) -> EstimatorSettings | None:
    """Merge two sets of estimator settings, preferring the overrides.

    A common use case is: merge_estimator_settings(<command-line settings>, <call settings>)
    """
    if base and overrides:
        return base | overrides
    else:
        return base or overrides


def resolve_estimator_settings(settings: EstimatorSettings | None) -> EstimatorSettings:
    """Fill in defaults and validate."""
    from .exceptions import ConfigurationError

    resolved = merge_estimator_settings(DEFAULT_ESTIMATOR_SETTINGS, settings)
    assert resolved is not None
    if not 0.0 < resolved['level'] < 1.0:
        raise ConfigurationError(f'Confidence level must lie in (0, 1), got {resolved["level"]}')
    if resolved['n_jobs'] < 1:
        raise ConfigurationError(f'n_jobs must be positive, got {resolved["n_jobs"]}')
    if resolved['chunk_elements'] < 1:
        raise ConfigurationError(f'chunk_elements must be positive, got {resolved["chunk_elements"]}')
    if not 0.0 <= resolved['propensity_clip'] < 0.5:
        raise ConfigurationError(f'propensity_clip must lie in [0, 0.5), got {resolved["propensity_clip"]}')
    return resolved


class RuntimeSettings(BaseSettings):
    """Process-level settings read from the environment."""

    model_config = SettingsConfigDict(env_prefix='', extra='ignore')

    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    """Worker count, from the `THREADS` environment variable; `--threads` overrides it."""
