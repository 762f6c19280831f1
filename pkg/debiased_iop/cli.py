"""Command line: `debiased-iop estimate | simulate | folds`.

Every failure prints one `E_CONFIG:`, `E_DATA:` or `E_NUM:` line to stderr and exits with 2, 3 or 4.
"""

from __future__ import annotations as _annotations

import argparse
import sys
import warnings
from collections.abc import Sequence
from pathlib import Path
from typing import Any, NoReturn

import logfire
import numpy as np
from pydantic import ValidationError

from .crossfit import make_folds, make_pair_blocks
from .data import load_csv
from .estimators import (
    contrast_te_debiased,
    contrast_te_plugin,
    iop_gini_debiased_general,
    iop_gini_debiased_np,
    iop_gini_plugin,
    ranking_risk_debiased,
    ranking_risk_plugin,
    varfv_debiased,
    varfv_plugin,
)
from .exceptions import ConfigurationError, EstimationError
from .format_as_table import format_as_table, format_records
from .learners import CvPenalty, FixedPenalty, ForestParams, LearnerSpec
from .result import EstimateResult
from .settings import DEFAULT_FOLDS, DEFAULT_SEED, EstimatorSettings, RuntimeSettings
from .simulate import DgpSpec, McConfig, run_grid, write_grid

__all__ = ('main', 'build_parser')

_LEARNERS = ('ridge', 'lasso', 'rf', 'random_forest', 'mean')

_DGP_ALIASES = {
    'linear': 'linear_gaussian',
    'saturated': 'saturated_categorical',
    'bernoulli': 'bernoulli_labels',
    'treatment': 'randomized_treatment',
}

_DEFAULT_ESTIMAND = {
    'linear_gaussian': 'varfv',
    'saturated_categorical': 'iop',
    'bernoulli_labels': 'ranking',
    'randomized_treatment': 'contrast',
}


class _UsageError(Exception):
    def __init__(self, parser: argparse.ArgumentParser, message: str):
        self.parser = parser
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    """Argument parser that hands errors back to `main` instead of exiting."""

    def error(self, message: str) -> NoReturn:
        raise _UsageError(self, message)


def _add_runtime_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int, default=None, help=f'random seed (default: {DEFAULT_SEED})')
    parser.add_argument(
        '--threads', type=int, default=None, help='worker count (default: $THREADS or the number of cores)'
    )
    parser.add_argument('--verbose', action='store_true', help='print log spans to the console')


def _add_learner_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('first-step learner')
    group.add_argument('--learner', choices=_LEARNERS, default='lasso')
    group.add_argument('--log-outcome', action='store_true', help='fit ln(y) and exponentiate the predictions')
    group.add_argument('--lambda', dest='lam', type=float, default=None, help='fixed penalty (default: CV)')
    group.add_argument('--cv-folds', type=int, default=10, help='folds of the penalty cross-validation')
    group.add_argument('--trees', type=int, default=500)
    group.add_argument('--mtry', type=int, default=None)
    group.add_argument('--min-node', type=int, default=5)
    group.add_argument('--interactions', type=int, default=1, help='interaction order of categorical dummies')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='debiased-iop', description='Debiased inference for U-statistic functionals.')
    commands = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    estimate = commands.add_parser('estimate', help='estimate a functional from a CSV file')
    estimate.add_argument('estimand', choices=('iop', 'varfv', 'ranking', 'ate'))
    estimate.add_argument('--data', required=True, type=Path, help='input CSV with a header row')
    estimate.add_argument('--outcome', required=True)
    estimate.add_argument('--covariates', required=True, nargs='+')
    estimate.add_argument('--treatment', default=None, help='binary treatment column (required by ate)')
    estimate.add_argument('--method', choices=('plugin', 'debiased'), default='debiased')
    estimate.add_argument(
        '--alpha-learner',
        choices=('pairwise', 'zero', *_LEARNERS),
        default=None,
        help='correction weights: pairwise substitution, zero (no correction), or a learner for the additive form '
        '(iop) or the projection (ate)',
    )
    estimate.add_argument('--folds', type=int, default=DEFAULT_FOLDS, help='cross-fitting folds K (>= 3)')
    estimate.add_argument('--crossfit', action='store_true', help='cross-fit the plug-in estimate')
    estimate.add_argument('--contrast', choices=('difference', 'indicator'), default='difference')
    estimate.add_argument('--level', type=float, default=0.95)
    estimate.add_argument('--out', type=Path, default=None, help='write the result as JSON')
    estimate.add_argument('--csv-out', type=Path, default=None, help='write the result as a one-row CSV')
    _add_learner_flags(estimate)
    _add_runtime_flags(estimate)

    simulate = commands.add_parser('simulate', help='Monte Carlo bias and coverage on a simulated design')
    simulate.add_argument('--dgp', choices=(*_DGP_ALIASES, *_DGP_ALIASES.values()), default='saturated')
    simulate.add_argument('--sigma', type=float, default=0.1, help='noise SD of ln(y) in the saturated design')
    simulate.add_argument('--n', type=int, nargs='+', default=[1000])
    simulate.add_argument('--reps', type=int, default=200)
    simulate.add_argument('--learner', choices=_LEARNERS, nargs='+', default=['lasso'])
    simulate.add_argument('--estimator', choices=('plugin', 'debiased'), nargs='+', default=['debiased'])
    simulate.add_argument('--estimand', choices=('iop', 'varfv', 'ranking', 'contrast'), default=None)
    simulate.add_argument('--contrast', choices=('difference', 'indicator'), default='difference')
    simulate.add_argument('--folds', type=int, default=DEFAULT_FOLDS)
    simulate.add_argument('--level', type=float, default=0.95)
    simulate.add_argument('--out', type=Path, default=Path('mc'), help='output prefix for .csv and .txt')
    _add_runtime_flags(simulate)

    folds = commands.add_parser('folds', help='print the fold and pair-block partition')
    folds.add_argument('--n', type=int, required=True)
    folds.add_argument('--k', type=int, default=DEFAULT_FOLDS)
    folds.add_argument('--assignment', action='store_true', help='also list the fold of every observation')
    _add_runtime_flags(folds)
    return parser


def _learner_spec(args: argparse.Namespace, name: str, seed: int, *, transform: bool = True) -> LearnerSpec:
    return LearnerSpec(
        kind='random_forest' if name == 'rf' else name,  # pyright: ignore[reportArgumentType]
        penalty=FixedPenalty(args.lam) if args.lam is not None else CvPenalty(folds=args.cv_folds, seed=seed),
        rf_params=ForestParams(n_trees=args.trees, mtry=args.mtry, min_node=args.min_node, seed=seed),
        transform='log_exp' if transform and args.log_outcome else 'none',
        interaction_order=args.interactions,
    )


def _alpha_spec(args: argparse.Namespace, seed: int) -> Any:
    """`None` selects each estimand's default correction weights."""
    alpha = args.alpha_learner
    if alpha is None:
        return None
    if alpha in ('pairwise', 'zero'):
        if args.estimand in ('iop', 'ate'):
            return alpha
        if alpha == 'pairwise' and args.estimand == 'ranking':
            return None
        raise ConfigurationError(f'--alpha-learner {alpha} is not available for `estimate {args.estimand}`')
    return _learner_spec(args, alpha, seed, transform=False)


def _estimate(args: argparse.Namespace, seed: int, settings: EstimatorSettings) -> EstimateResult:
    if args.estimand == 'ate' and args.treatment is None:
        raise ConfigurationError('--treatment is required by `estimate ate`')
    data = load_csv(args.data, args.outcome, args.covariates, args.treatment)
    spec = _learner_spec(args, args.learner, seed)
    alpha_spec = _alpha_spec(args, seed)

    if args.method == 'plugin':
        folds = make_folds(data.n, args.folds, seed) if args.crossfit else None
        if args.estimand == 'iop':
            return iop_gini_plugin(data, spec, folds=folds, settings=settings)
        if args.estimand == 'varfv':
            return varfv_plugin(data, spec, folds=folds, settings=settings)
        if args.estimand == 'ranking':
            return ranking_risk_plugin(data, spec, folds=folds, settings=settings)
        return contrast_te_plugin(data, args.contrast, spec, folds=folds, settings=settings)

    folds = make_folds(data.n, args.folds, seed)
    if args.estimand == 'iop':
        if alpha_spec is None or alpha_spec == 'pairwise':
            return iop_gini_debiased_np(data, spec, folds, settings=settings)
        return iop_gini_debiased_general(data, spec, alpha_spec, folds, settings=settings)
    if args.estimand == 'varfv':
        return varfv_debiased(data, spec, folds, settings=settings)
    if args.estimand == 'ranking':
        return ranking_risk_debiased(data, spec, folds, alpha_spec=alpha_spec, settings=settings)
    return contrast_te_debiased(data, args.contrast, spec, folds, alpha_spec=alpha_spec, settings=settings)


def _write_output(path: Path, content: bytes) -> None:
    try:
        path.write_bytes(content)
    except OSError as e:
        raise ConfigurationError(f'Cannot write {path}: {e.strerror}') from e


def cmd_estimate(args: argparse.Namespace, runtime: RuntimeSettings) -> int:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    settings: EstimatorSettings = {'level': args.level, 'n_jobs': runtime.threads}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        result = _estimate(args, seed, settings)
    result.seed = seed
    title = f'{args.estimand} ({result.method}, {result.learner.get("kind", "")})'
    print(format_as_table(result, title=title))
    for warning in caught:
        print(f'warning: {warning.message}', file=sys.stderr)
    if args.out is not None:
        _write_output(args.out, result.to_json())
    if args.csv_out is not None:
        _write_output(args.csv_out, result.to_csv_row().encode('utf-8'))
    return 0


def cmd_simulate(args: argparse.Namespace, runtime: RuntimeSettings) -> int:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    kind = _DGP_ALIASES.get(args.dgp, args.dgp)
    base = McConfig(
        dgp=DgpSpec(kind=kind, sigma=args.sigma, seed=seed),  # pyright: ignore[reportArgumentType]
        n=args.n[0],
        reps=args.reps,
        estimator=args.estimator[0],
        learner=args.learner[0],
        estimand=args.estimand or _DEFAULT_ESTIMAND[kind],
        K=args.folds,
        level=args.level,
        seed=seed,
        contrast=args.contrast,
    )
    reports = run_grid(base, args.n, args.learner, args.estimator, n_jobs=runtime.threads)
    try:
        csv_path, txt_path = write_grid(reports, args.out)
    except OSError as e:
        raise ConfigurationError(f'Cannot write {e.filename or args.out}: {e.strerror}') from e
    print(txt_path.read_text(encoding='utf-8'))
    print(f'wrote {csv_path} and {txt_path}')
    return 0


def cmd_folds(args: argparse.Namespace, runtime: RuntimeSettings) -> int:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    folds = make_folds(args.n, args.k, seed)
    blocks = make_pair_blocks(folds)
    rows = [
        {
            'block': block.index + 1,
            'folds': ','.join(str(k + 1) for k in block.folds),
            'pairs': block.n_pairs,
            'training': int(np.count_nonzero(~np.isin(folds.assignment, block.folds))),
        }
        for block in blocks
    ]
    print(f'n={folds.n}, K={folds.K}, seed={seed}: {blocks.L} blocks, {blocks.n_pairs} pairs')
    print(format_records(rows))
    if args.assignment:
        listing = [{'observation': i + 1, 'fold': int(k) + 1} for i, k in enumerate(folds.assignment)]
        print(format_records(listing, title='fold assignment'))
    return 0


_COMMANDS = {'estimate': cmd_estimate, 'simulate': cmd_simulate, 'folds': cmd_folds}


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and return the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        e.parser.print_usage(sys.stderr)
        print(f'{ConfigurationError.code}: {e}', file=sys.stderr)
        return ConfigurationError.exit_code

    logfire.configure(send_to_logfire='if-token-present', console=None if args.verbose else False)
    try:
        try:
            runtime = RuntimeSettings()
        except ValidationError as e:
            raise ConfigurationError(f'Invalid environment settings: {e.errors()[0]["msg"]}') from e
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigurationError(f'--threads must be at least 1, got {args.threads}')
            runtime.threads = args.threads
        return _COMMANDS[args.command](args, runtime)
    except EstimationError as e:
        print(f'{e.code}: {e}', file=sys.stderr)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
