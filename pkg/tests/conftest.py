from __future__ import annotations as _annotations

from pathlib import Path

import logfire
import numpy as np
import pytest

from debiased_iop.data import ColumnMeta, Dataset


@pytest.fixture(scope='session', autouse=True)
def _quiet_logfire():
    logfire.configure(send_to_logfire=False, console=False)


@pytest.fixture
def write_text(tmp_path: Path):
    def write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return path

    return write


@pytest.fixture
def linear_data() -> Dataset:
    """`y = 2 + x1 - 0.5 x2 + N(0, 0.25)` with two continuous covariates."""
    rng = np.random.default_rng(3)
    x = rng.standard_normal((120, 2))
    y = 2.0 + x[:, 0] - 0.5 * x[:, 1] + 0.5 * rng.standard_normal(120)
    return Dataset(y=y, x=x)


@pytest.fixture
def income_data() -> Dataset:
    """Positive outcomes driven by one 4-level circumstance and one continuous covariate."""
    rng = np.random.default_rng(11)
    n = 150
    group = rng.integers(0, 4, size=n).astype(np.float64)
    z = rng.standard_normal(n)
    y = np.exp(1.0 + 0.3 * group + 0.2 * z + 0.3 * rng.standard_normal(n))
    meta = (ColumnMeta('group', kind='categorical', levels=4), ColumnMeta('z'))
    return Dataset(y=y, x=np.column_stack([group, z]), col_meta=meta)


@pytest.fixture
def treatment_data() -> Dataset:
    rng = np.random.default_rng(5)
    n = 120
    x = rng.standard_normal((n, 2))
    d = (rng.uniform(size=n) < 0.5).astype(np.float64)
    y = 1.0 + x[:, 0] + d + rng.standard_normal(n)
    return Dataset(y=y, x=x, d=d)
