from __future__ import annotations as _annotations

from dataclasses import dataclass

import pytest

from debiased_iop.format_as_table import flatten, format_as_table, format_records, records_to_csv
from debiased_iop.result import Diagnostics, EstimateResult


def test_flatten_example():
    assert flatten({'theta': 0.18, 'ci': (0.17, 0.19)}) == {'theta': '0.180000', 'ci.0': '0.170000', 'ci.1': '0.190000'}


def test_flatten_scalars():
    @dataclass
    class Row:
        name: str
        flag: bool
        count: int
        tiny: float
        missing: None = None

    assert flatten(Row('a', True, 3, 1e-7)) == {
        'name': 'a',
        'flag': 'yes',
        'count': '3',
        'tiny': '1.000000e-07',
        'missing': '',
    }
    assert flatten(False, 'degenerate') == {'degenerate': 'no'}
    assert flatten(float('nan'), 'x') == {'x': 'nan'}


def test_flatten_rejects_unknown_keys_and_types():
    with pytest.raises(TypeError):
        flatten({(1, 2): 0.5})
    with pytest.raises(TypeError):
        flatten(object())


def test_format_as_table_of_result():
    result = EstimateResult(
        estimand='iop',
        method='debiased_np',
        theta=0.18,
        se=0.01,
        ci_low=0.16,
        ci_high=0.2,
        level=0.95,
        n=1000,
        learner={'kind': 'lasso'},
        diagnostics=Diagnostics(degenerate=False, notes=['fine']),
        folds=5,
        seed=42,
    )
    text = format_as_table(result, title='iop')
    assert 'theta' in text
    assert '0.180000' in text
    assert 'diagnostics.degenerate' in text
    assert 'diagnostics.notes.0' in text
    assert 'learner.kind' in text


def test_format_records_aligns_columns():
    text = format_records([{'n': 500, 'bias': -0.0123}, {'n': 1000, 'bias': 0.001, 'coverage': 0.95}], title='grid')
    lines = [line.split() for line in text.splitlines() if line.strip()]
    assert ['n', 'bias', 'coverage'] in lines
    assert ['500', '-0.012300'] in lines
    assert ['1000', '0.001000', '0.950000'] in lines


def test_records_to_csv():
    text = records_to_csv([{'n': 10, 'bias': 0.1}, {'n': 20, 'bias': 1 / 3}])
    assert text.splitlines() == ['n,bias', '10,0.10000000000000001', '20,0.33333333333333331']
