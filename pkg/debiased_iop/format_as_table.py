from __future__ import annotations as _annotations

import io
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, is_dataclass
from typing import Any

import pandas as pd
from pydantic import BaseModel
from rich import box
from rich.console import Console
from rich.table import Table

__all__ = ('flatten', 'format_as_table', 'format_records', 'records_to_csv')


def flatten(obj: Any, prefix: str | None = None, none_str: str = '') -> dict[str, str]:
    """Flatten a Python object into `dotted.key -> text` pairs.

    Supports: `str`, `bool`, `int`, `float`, `Mapping`, sequences, `dataclass`, and `BaseModel`.

    Example:
    ```python {title="flatten_example.py" lint="skip"}
    from debiased_iop.format_as_table import flatten

    print(flatten({'theta': 0.18, 'ci': (0.17, 0.19)}))
    #> {'theta': '0.180000', 'ci.0': '0.170000', 'ci.1': '0.190000'}
    ```
    """
    return _Flatten(none_str=none_str).to_items(obj, prefix)


@dataclass
class _Flatten:
    none_str: str

    def to_items(self, value: Any, key: str | None) -> dict[str, str]:
        name = key or 'value'
        if value is None:
            return {name: self.none_str}
        elif isinstance(value, str):
            return {name: value}
        elif isinstance(value, bool):
            return {name: 'yes' if value else 'no'}
        elif isinstance(value, int):
            return {name: str(value)}
        elif isinstance(value, float):
            return {name: _format_float(value)}
        elif isinstance(value, Mapping):
            return self._mapping_items(value, key)  # pyright: ignore[reportUnknownArgumentType]
        elif is_dataclass(value) and not isinstance(value, type):
            return self._mapping_items(asdict(value), key)
        elif isinstance(value, BaseModel):
            return self._mapping_items(value.model_dump(mode='python'), key)
        elif isinstance(value, Iterable):
            out: dict[str, str] = {}
            for index, item in enumerate(value):  # pyright: ignore[reportUnknownVariableType]
                out.update(self.to_items(item, f'{name}.{index}'))
            return out
        else:
            raise TypeError(f'Unsupported type for table formatting: {type(value)}')

    def _mapping_items(self, mapping: Mapping[Any, Any], prefix: str | None) -> dict[str, str]:
        out: dict[str, str] = {}
        for key, value in mapping.items():
            if not isinstance(key, (str, int)):
                raise TypeError(f'Unsupported key type for table formatting: {type(key)}, only str and int are allowed')
            out.update(self.to_items(value, str(key) if prefix is None else f'{prefix}.{key}'))
        return out


def _format_float(value: float) -> str:
    if not math.isfinite(value):
        return str(value)
    if value != 0.0 and not 1e-4 <= abs(value) < 1e6:
        return f'{value:.6e}'
    return f'{value:.6f}'


def _render(table: Table, width: int) -> str:
    console = Console(file=io.StringIO(), width=width, record=True, color_system=None, force_terminal=False)
    console.print(table)
    return console.export_text()


def format_as_table(obj: Any, title: str | None = None, width: int = 100) -> str:
    """Render an object as an aligned two-column `field  value` table in plain text."""
    table = Table(title=title, box=box.SIMPLE, show_header=False, pad_edge=False)
    table.add_column('field', style='bold')
    table.add_column('value', justify='right')
    for key, value in flatten(obj).items():
        table.add_row(key, value)
    return _render(table, width)


def format_records(records: Sequence[Mapping[str, Any]], title: str | None = None, width: int = 160) -> str:
    """Render a list of flat records (one per row, shared keys) as an aligned plain-text table."""
    columns: list[str] = []
    for record in records:
        columns.extend(key for key in record if key not in columns)
    table = Table(title=title, box=box.SIMPLE_HEAD, pad_edge=False)
    for column in columns:
        table.add_column(column, justify='right')
    for record in records:
        table.add_row(*(flatten(record.get(column), column).get(column, '') for column in columns))
    return _render(table, width)


def records_to_csv(records: Sequence[Mapping[str, Any]]) -> str:
    """Records as CSV text with full float precision."""
    buffer = io.StringIO()
    pd.DataFrame(list(records)).to_csv(buffer, index=False, float_format='%.17g', lineterminator='\n')
    return buffer.getvalue()
