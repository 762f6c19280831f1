"""Observation model and tabular ingestion.

A [`Dataset`][debiased_iop.data.Dataset] holds the sample `W_i = (Y_i, X_i)` or `W_i = (Y_i, D_i, X_i)`.
It is immutable once built, so it can be shared by parallel block fits and Monte Carlo workers.
"""

from __future__ import annotations as _annotations

import itertools
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import logfire_api
import numpy as np
import pandas as pd
from numpy.typing import NDArray

from .exceptions import ConfigurationError, DataError, DomainError, NegativeOutcomeWarning, UsageError

__all__ = (
    'OutcomeTransform',
    'ColumnKind',
    'ColumnMeta',
    'Dataset',
    'DataSummary',
    'load_csv',
    'write_csv',
    'validate_for_iop',
    'check_transform',
    'design_matrix',
    'describe',
)

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')

OutcomeTransform = Literal['none', 'log_exp']
"""How a learner treats the outcome.

`log_exp` fits on `ln Y` and exponentiates predictions; estimators always see level-scale `Y`.
"""

ColumnKind = Literal['continuous', 'categorical', 'dummy']


@dataclass(frozen=True)
class ColumnMeta:
    """What a covariate column holds."""

    name: str
    kind: ColumnKind = 'continuous'
    levels: int | None = None
    """Level count for `categorical` columns, whose values are integer codes `0..levels-1`."""
    group: str | None = None
    """Source column of a `dummy` column produced by CSV expansion."""
    level: str | None = None
    """Level indicated by a `dummy` column."""


@dataclass(frozen=True)
class Dataset:
    """A complete i.i.d. sample."""

    y: NDArray[np.float64]
    """Outcome, level units, length `n`."""
    x: NDArray[np.float64]
    """Covariates, shape `(n, p)`."""
    d: NDArray[np.float64] | None = None
    """Optional binary treatment."""
    col_meta: tuple[ColumnMeta, ...] = ()
    """One entry per covariate column; defaults to continuous columns `x1..xp`."""
    y_name: str = 'y'
    d_name: str = 'd'

    def __post_init__(self) -> None:
        y = np.array(self.y, dtype=np.float64)
        x = np.array(self.x, dtype=np.float64)
        if y.ndim != 1:
            raise UsageError(f'y must be a vector, got shape {y.shape}')
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise UsageError(f'x must have {y.shape[0]} rows, got shape {x.shape}')
        n = y.shape[0]
        if n < 2:
            raise DataError(f'At least 2 observations are required, got {n}')
        _check_finite(y, self.y_name)
        for j in range(x.shape[1]):
            _check_finite(x[:, j], f'x[{j}]')

        meta = self.col_meta or tuple(ColumnMeta(f'x{j + 1}') for j in range(x.shape[1]))
        if len(meta) != x.shape[1]:
            raise UsageError(f'col_meta has {len(meta)} entries for {x.shape[1]} columns')
        for j, column in enumerate(meta):
            if column.kind == 'categorical':
                codes = x[:, j]
                if column.levels is None or column.levels < 2:
                    raise UsageError(f'Categorical column {column.name!r} needs at least 2 levels')
                bad = np.flatnonzero((codes != np.round(codes)) | (codes < 0) | (codes >= column.levels))
                if bad.size:
                    raise DataError('Categorical code out of range', row=int(bad[0]) + 1, column=column.name)

        d = None
        if self.d is not None:
            d = np.array(self.d, dtype=np.float64)
            if d.shape != y.shape:
                raise UsageError(f'd must have length {n}, got shape {d.shape}')
            _check_finite(d, self.d_name)
            bad = np.flatnonzero((d != 0.0) & (d != 1.0))
            if bad.size:
                raise DataError('Treatment must be 0 or 1', row=int(bad[0]) + 1, column=self.d_name)
            d.setflags(write=False)

        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'd', d)
        object.__setattr__(self, 'col_meta', tuple(meta))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    def with_outcome(self, y: NDArray[np.float64]) -> Dataset:
        """Copy with a different outcome vector."""
        return replace(self, y=y)


def _check_finite(values: NDArray[np.float64], column: str) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise DataError('Missing or non-finite value', row=int(bad[0]) + 1, column=column)


def check_transform(transform: OutcomeTransform, y: NDArray[np.float64]) -> None:
    """Reject a `log_exp` transform on nonpositive outcomes."""
    if transform == 'log_exp':
        bad = np.flatnonzero(y <= 0)
        if bad.size:
            raise DomainError('The log-exp transform requires strictly positive outcomes', row=int(bad[0]) + 1)
    elif transform != 'none':
        raise ConfigurationError(f'Unknown outcome transform: {transform!r}')


def load_csv(
    path: str | Path,
    outcome_col: str,
    covariate_cols: Sequence[str],
    treatment_col: str | None = None,
) -> Dataset:
    """Read a comma-separated UTF-8 file with a header row into a [`Dataset`][debiased_iop.data.Dataset].

    Non-numeric covariates are treated as categorical and expanded into dummies with the first level in
    sorted order dropped.

    Args:
        path: CSV file.
        outcome_col: Outcome column name.
        covariate_cols: Covariate column names, in the order they enter the design.
        treatment_col: Optional binary treatment column name.

    Returns:
        The validated dataset.

    Raises:
        ConfigurationError: The file cannot be read or a named column does not exist.
        DataError: The file is not UTF-8, is empty or has ragged rows, or a cell is missing, non-numeric
            where a number is required, or non-finite.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f'Input file not found: {path}')
    with _logfire.span('load csv {path}', path=str(path)):
        try:
            frame = pd.read_csv(path, encoding='utf-8', sep=',')
        except UnicodeDecodeError as e:
            raise DataError(f'{path.name} is not valid UTF-8 (byte offset {e.start})') from e
        except pd.errors.EmptyDataError as e:
            raise DataError(f'{path.name} is empty') from e
        except pd.errors.ParserError as e:
            raise DataError(f'Malformed CSV {path.name}: {" ".join(str(e).split())}') from e
        except OSError as e:
            raise ConfigurationError(f'Cannot read {path}: {e.strerror}') from e
        wanted = [outcome_col, *covariate_cols] + ([treatment_col] if treatment_col else [])
        missing = [name for name in wanted if name not in frame.columns]
        if missing:
            raise ConfigurationError(f'Column(s) not found in {path.name}: {", ".join(missing)}')
        if len(frame) < 2:
            raise DataError(f'At least 2 observations are required, got {len(frame)}')

        y = _numeric_column(frame, outcome_col)
        d = _numeric_column(frame, treatment_col) if treatment_col else None

        columns: list[NDArray[np.float64]] = []
        meta: list[ColumnMeta] = []
        for name in covariate_cols:
            series = frame[name]
            if pd.api.types.is_numeric_dtype(series) or pd.api.types.is_bool_dtype(series):
                columns.append(_numeric_column(frame, name))
                meta.append(ColumnMeta(name))
            else:
                dummies, dummy_meta = _expand_categorical(series, name)
                columns.extend(dummies)
                meta.extend(dummy_meta)

        x = np.column_stack(columns) if columns else np.empty((len(frame), 0))
        data = Dataset(
            y=y,
            x=x,
            d=d,
            col_meta=tuple(meta),
            y_name=outcome_col,
            d_name=treatment_col or 'd',
        )
        _logfire.info('loaded {n} rows with {p} covariate columns', n=data.n, p=data.p)
        return data


def _numeric_column(frame: pd.DataFrame, name: str) -> NDArray[np.float64]:
    raw = frame[name]
    values = pd.to_numeric(raw, errors='coerce').to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        row = int(bad[0])
        what = 'Missing value' if pd.isna(raw.iloc[row]) else f'Non-numeric or non-finite value {raw.iloc[row]!r}'
        raise DataError(what, row=row + 1, column=name)
    return values


def _expand_categorical(series: pd.Series, name: str) -> tuple[list[NDArray[np.float64]], list[ColumnMeta]]:
    missing = np.flatnonzero(series.isna().to_numpy())
    if missing.size:
        raise DataError('Missing value', row=int(missing[0]) + 1, column=name)
    labels = series.astype(str).to_numpy()
    levels = sorted(set(labels))
    columns = [(labels == level).astype(np.float64) for level in levels[1:]]
    meta = [ColumnMeta(f'{name}[{level}]', kind='dummy', group=name, level=level) for level in levels[1:]]
    return columns, meta


def write_csv(data: Dataset, path: str | Path) -> None:
    """Write a dataset so that [`load_csv`][debiased_iop.data.load_csv] reads back the same numbers."""
    columns: dict[str, NDArray[np.float64]] = {data.y_name: data.y}
    if data.d is not None:
        columns[data.d_name] = data.d
    for j, column in enumerate(data.col_meta):
        columns[column.name] = data.x[:, j]
    pd.DataFrame(columns).to_csv(Path(path), index=False, float_format='%.17g', encoding='utf-8')


def validate_for_iop(data: Dataset) -> None:
    """Check that the Gini of conditional means is defined on this sample.

    Raises:
        DomainError: The mean outcome is not positive.
    """
    mean = float(np.mean(data.y))
    if mean <= 0.0:
        raise DomainError(f'Gini denominator nonpositive: mean outcome is {mean:.6g}')
    negative = int(np.count_nonzero(data.y < 0))
    if negative:
        _logfire.warn('{count} negative outcomes in the sample', count=negative)
        warnings.warn(
            f'{negative} negative outcome(s); the Gini is computed but may exceed the usual [0, 1] range',
            NegativeOutcomeWarning,
            stacklevel=2,
        )


@dataclass
class _Factor:
    name: str
    dummies: NDArray[np.float64]


def design_matrix(data: Dataset, interaction_order: int = 1) -> NDArray[np.float64]:
    """Regressor matrix used by the learners.

    Continuous columns enter unchanged. Integer-coded categorical columns become reference-level dummies
    and CSV dummy groups are kept as they are. With `interaction_order > 1`, products of dummies from
    distinct categorical variables are appended: every pair of variables in order, scanning levels
    row-major, then every triple, and so on. At order 3 with three 8-level variables this is the
    21 + 147 + 343 column saturated dictionary.
    """
    if interaction_order < 1:
        raise ConfigurationError(f'interaction_order must be at least 1, got {interaction_order}')
    n = data.n
    main: list[NDArray[np.float64]] = []
    factors: list[_Factor] = []
    groups: dict[str, list[int]] = {}
    for j, column in enumerate(data.col_meta):
        if column.kind == 'continuous':
            main.append(data.x[:, [j]])
        elif column.kind == 'categorical':
            assert column.levels is not None
            codes = data.x[:, j]
            dummies = np.column_stack([(codes == level).astype(np.float64) for level in range(1, column.levels)])
            factors.append(_Factor(column.name, dummies))
            main.append(dummies)
        else:
            group = column.group or column.name
            if group not in groups:
                groups[group] = []
                factors.append(_Factor(group, np.empty((n, 0))))
            groups[group].append(j)
            main.append(data.x[:, [j]])
    for factor in factors:
        if factor.name in groups:
            factor.dummies = data.x[:, groups[factor.name]]

    blocks = list(main)
    for order in range(2, min(interaction_order, len(factors)) + 1):
        for combo in itertools.combinations(factors, order):
            product = combo[0].dummies
            for factor in combo[1:]:
                product = (product[:, :, None] * factor.dummies[:, None, :]).reshape(n, -1)
            blocks.append(product)
    if not blocks:
        return np.empty((n, 0))
    return np.ascontiguousarray(np.column_stack(blocks))


@dataclass
class DataSummary:
    """Descriptive statistics printed next to estimates."""

    n: int
    p: int
    mean_y: float
    min_y: float
    max_y: float
    share_treated: float | None = None
    categorical: list[str] = field(default_factory=list)


def describe(data: Dataset) -> DataSummary:
    categorical = sorted(
        {column.group or column.name for column in data.col_meta if column.kind in ('categorical', 'dummy')}
    )
    return DataSummary(
        n=data.n,
        p=data.p,
        mean_y=float(np.mean(data.y)),
        min_y=float(np.min(data.y)),
        max_y=float(np.max(data.y)),
        share_treated=None if data.d is None else float(np.mean(data.d)),
        categorical=categorical,
    )
