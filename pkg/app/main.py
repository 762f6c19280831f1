"""Plug-in versus debiased Gini IOp on one draw of the saturated simulation design.

Run with:

    uv run python app/main.py
"""

from __future__ import annotations as _annotations

import os
import warnings
from dataclasses import dataclass

import logfire

from debiased_iop import InvalidInferenceWarning, LearnerSpec, iop_gini_debiased_np, iop_gini_plugin, make_folds
from debiased_iop.format_as_table import format_as_table
from debiased_iop.simulate import gen_saturated, true_gini_saturated

# 'if-token-present' means nothing will be sent (and the example will work) if you don't have logfire configured
logfire.configure(send_to_logfire='if-token-present', console=False)


@dataclass
class Example:
    n: int = 1000
    sigma: float = 0.1
    seed: int = 42
    folds: int = 5
    threads: int = int(os.getenv('THREADS', '1'))


def main(example: Example) -> None:
    data = gen_saturated(example.n, example.sigma, example.seed)
    learner = LearnerSpec(kind='lasso', transform='log_exp', interaction_order=3)
    settings = {'n_jobs': example.threads}

    with logfire.span('saturated example n={n}', n=example.n):
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', InvalidInferenceWarning)
            plugin = iop_gini_plugin(data, learner, settings=settings)
        folds = make_folds(data.n, example.folds, example.seed)
        debiased = iop_gini_debiased_np(data, learner, folds, settings=settings)

    print(f'true IOp: {true_gini_saturated(example.sigma):.4f}')
    print(format_as_table(plugin, title='plug-in'))
    print(format_as_table(debiased, title='debiased'))


if __name__ == '__main__':
    main(Example())
