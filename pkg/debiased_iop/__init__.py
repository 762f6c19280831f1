from .crossfit import FoldPartition, PairBlocks, kappa_counts, make_folds, make_pair_blocks, training_indices
from .data import ColumnMeta, Dataset, design_matrix, load_csv, validate_for_iop, write_csv
from .estimators import (
    contrast_te_debiased,
    contrast_te_plugin,
    gini_classic,
    iop_gini_debiased_general,
    iop_gini_debiased_np,
    iop_gini_plugin,
    iop_gini_se,
    ipw_ate,
    orthogonality_check,
    ranking_risk_debiased,
    ranking_risk_plugin,
    varfv_debiased,
    varfv_plugin,
)
from .exceptions import (
    ConfigurationError,
    DataError,
    DegenerateKernelWarning,
    DomainError,
    EstimationError,
    InvalidInferenceWarning,
    NegativeOutcomeWarning,
    NumericalError,
    SimulationError,
    UsageError,
)
from .learners import CvPenalty, FixedPenalty, ForestParams, LearnerSpec, cv_tune, fit, infer_learner, predict
from .learners.function import FunctionLearner, MeanLearner
from .result import Diagnostics, EstimateResult
from .settings import EstimatorSettings
from .ustat import FunctionKernel, PairKernel, loo_means, sigma_hat, u_mean

__all__ = (
    'FoldPartition',
    'PairBlocks',
    'kappa_counts',
    'make_folds',
    'make_pair_blocks',
    'training_indices',
    'ColumnMeta',
    'Dataset',
    'design_matrix',
    'load_csv',
    'validate_for_iop',
    'write_csv',
    'contrast_te_debiased',
    'contrast_te_plugin',
    'gini_classic',
    'iop_gini_debiased_general',
    'iop_gini_debiased_np',
    'iop_gini_plugin',
    'iop_gini_se',
    'ipw_ate',
    'orthogonality_check',
    'ranking_risk_debiased',
    'ranking_risk_plugin',
    'varfv_debiased',
    'varfv_plugin',
    'ConfigurationError',
    'DataError',
    'DegenerateKernelWarning',
    'DomainError',
    'EstimationError',
    'InvalidInferenceWarning',
    'NegativeOutcomeWarning',
    'NumericalError',
    'SimulationError',
    'UsageError',
    'CvPenalty',
    'FixedPenalty',
    'ForestParams',
    'LearnerSpec',
    'cv_tune',
    'fit',
    'infer_learner',
    'predict',
    'FunctionLearner',
    'MeanLearner',
    'Diagnostics',
    'EstimateResult',
    'EstimatorSettings',
    'FunctionKernel',
    'PairKernel',
    'loo_means',
    'sigma_hat',
    'u_mean',
)
