"""Comparator methods.

naive_lasso      lasso GLM on the target study alone; ignores the structure
                 variables and any latent-class structure entirely
lca_glm          latent classes learned from the target study only, then the
                 class-specific mixture lasso on the target; no pooling and
                 no correction stage
trans_glm        single-population transfer: pooled lasso over all studies
                 followed by a target-only lasso correction, i.e. the
                 two-step pipeline with one class.  (A deliberate
                 simplification: every source is pooled, with no data-driven
                 selection of which sources to trust.)
targeted_psm     the full two-step procedure
targeted_psm_1   its one-pass variant: both EM loops run exactly once, so
                 the initial memberships are never refined
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .core import (
    CoefficientMatrix,
    GlmFamily,
    MembershipMatrix,
    Study,
    StudyCollection,
)
from .glm import WeightedGlmProblem, solve_weighted_lasso_glm
from .lca import LcaFitConfig, LcaModel
from .transfer import (
    TransferConfig,
    TransferFit,
    auto_tune_lambda,
    fit_targeted_psm,
    predict_risk,
)


class MethodId(str, Enum):
    TARGETED_PSM = "targeted_psm"
    TARGETED_PSM_1 = "targeted_psm_1"
    LCA_GLM = "lca_glm"
    TRANS_GLM = "trans_glm"
    NAIVE_LASSO = "naive_lasso"


# Methods whose output is a full per-class coefficient matrix comparable to
# the generating target coefficients.
MIXTURE_METHODS = frozenset(
    {MethodId.TARGETED_PSM, MethodId.TARGETED_PSM_1, MethodId.LCA_GLM}
)


def fit_naive_lasso(
    target: Study,
    family: GlmFamily,
    config: TransferConfig = None,
) -> CoefficientMatrix:
    """Single-column lasso GLM on the target study (structure variables and
    source studies ignored); penalty tuned by CV when lambda_pool='auto'."""
    config = config or TransferConfig()
    family.validate_outcomes(target.outcomes)
    data = StudyCollection(target=target)
    if isinstance(config.lambda_pool, str):
        ones = MembershipMatrix(probs=(np.ones((target.n, 1)),), stage="initial_v")
        lam = float(
            auto_tune_lambda(
                data, ones, family, "pool",
                grid=config.cv_grid, cv_folds=config.cv_folds, seed=config.seed,
                fit_intercept=config.fit_intercept,
            )[0]
        )
    else:
        lam = float(np.atleast_1d(np.asarray(config.lambda_pool, dtype=float))[0])
    n, p = target.predictors.shape
    if config.fit_intercept:
        design = np.column_stack([np.ones(n), target.predictors])
        mask = np.concatenate([[False], np.ones(p, dtype=bool)])
    else:
        design, mask = target.predictors, np.ones(p, dtype=bool)
    sol = solve_weighted_lasso_glm(
        WeightedGlmProblem(
            family=family, X=design, y=target.outcomes,
            weights=np.ones(n), lam=lam, penalize_mask=mask,
        )
    )
    if config.fit_intercept:
        return CoefficientMatrix(
            values=sol.beta[1:][:, None], intercept=sol.beta[:1], role="target_B0"
        )
    return CoefficientMatrix(values=sol.beta[:, None], role="target_B0")


def fit_lca_glm(
    target: Study,
    n_classes: int,
    config: TransferConfig = None,
    family: GlmFamily = None,
    lca_model: LcaModel = None,
    lca_config: LcaFitConfig = None,
) -> TransferFit:
    """Target-only mixture lasso: latent classes from the target study alone,
    then the class-specific EM fit restricted to the target.  No pooling
    information and no correction stage (delta stays identically zero)."""
    config = config or TransferConfig()
    family = family or GlmFamily.logistic()
    data = StudyCollection(target=target)
    cfg = replace(config, lambda_bias=np.inf)
    return fit_targeted_psm(
        data, n_classes, cfg, family, lca_model=lca_model, lca_config=lca_config
    )


def fit_trans_glm(
    data: StudyCollection,
    config: TransferConfig = None,
    family: GlmFamily = None,
) -> TransferFit:
    """Single-population transfer fit: the two-step pipeline with one latent
    class (all memberships 1), sharing every line of solver code with the
    full procedure."""
    config = config or TransferConfig()
    family = family or GlmFamily.logistic()
    if data.K < 1:
        raise ValueError("trans_glm needs at least one source study")
    return fit_targeted_psm(data, 1, config, family)


# ---------------------------------------------------------------------------
# Uniform dispatch used by the evaluation harness and the CLI
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FittedMethod:
    """A fitted method with a uniform scoring interface."""

    method: MethodId
    coef: CoefficientMatrix        # target-study coefficient estimate
    family: GlmFamily
    fit: TransferFit = None        # present for the mixture/transfer methods

    def scores(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Predicted outcome scores for new target-study subjects."""
        if self.fit is not None and self.fit.n_classes > 1:
            return np.atleast_1d(predict_risk(self.fit, X, Z))
        eta = self.coef.linear_predictor(np.atleast_2d(X))[:, 0]
        return self.family.mean(eta)


def fit_method(
    method: MethodId,
    data: StudyCollection,
    n_classes: int,
    config: TransferConfig = None,
    family: GlmFamily = None,
    lca_model: LcaModel = None,
    lca_config: LcaFitConfig = None,
) -> FittedMethod:
    """Fit one method on a study collection."""
    method = MethodId(method)
    config = config or TransferConfig()
    family = family or GlmFamily.logistic()
    if method is MethodId.NAIVE_LASSO:
        coef = fit_naive_lasso(data.target, family, config)
        return FittedMethod(method=method, coef=coef, family=family)
    if method is MethodId.TRANS_GLM:
        fit = fit_trans_glm(data, config, family)
        return FittedMethod(method=method, coef=fit.b_target, family=family, fit=fit)
    if method is MethodId.LCA_GLM:
        fit = fit_lca_glm(
            data.target, n_classes, config, family,
            lca_model=None, lca_config=lca_config,
        )
        return FittedMethod(method=method, coef=fit.b_target, family=family, fit=fit)
    if method is MethodId.TARGETED_PSM_1:
        config = replace(config, one_step=True)
    fit = fit_targeted_psm(
        data, n_classes, config, family, lca_model=lca_model, lca_config=lca_config
    )
    return FittedMethod(method=method, coef=fit.b_target, family=family, fit=fit)
