"""Penalized estimation and debiased inference for competing-risks
regression under the proportional subdistribution hazards model, built
for the regime with (many) more covariates than events.

The pipeline: IPCW-weighted penalized partial-likelihood fit, nodewise
inverse of the sample information matrix, one-step bias correction,
sandwich confidence intervals and Wald tests, plus data generators and
a Monte Carlo harness for coverage/power studies.
"""

__version__ = "0.1.0"

from .censoring import RiskGrid, StepSurvival, build_risk_grid, km_censoring
from .data import (
    CompetingRisksData,
    Standardization,
    ValidationReport,
    load_csv,
    save_csv,
    standardize,
    validate,
)
from .debias import (
    NodewiseFit,
    OneStepEstimate,
    PrecisionEstimate,
    nodewise_precision,
    nodewise_regression,
    one_step_estimate,
)
from .errors import DataError, FGrayError, NumericError
from .inference import (
    ContrastInference,
    InfluenceSet,
    basis_contrast,
    contrast_inference,
    corrected_standard_errors,
    influence_functions,
    sandwich_se,
)
from .pseudolik import (
    RiskAggregates,
    RiskSetKernel,
    ScoreContributions,
    aggregates,
    loglik,
    neg_hessian,
    score,
    score_contributions,
)
from .simulate import (
    BlockDesign,
    CensoringSpec,
    IndependentDesign,
    calibrate_uniform_bound,
    generate,
    resolve_censoring,
)
from .solver import (
    CvResult,
    PenalizedFit,
    cross_validate,
    fit_fine_gray_lasso,
    fit_linear_lasso,
    lambda_path,
)
from .study import PowerPoint, StudyDesign, StudyResult, power_sweep, run_study

__all__ = [name for name in dir() if not name.startswith("_")]
