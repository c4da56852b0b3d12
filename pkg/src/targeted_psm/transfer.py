"""Two-step targeted transfer learning across studies.

Step 1 (pooling): starting from the latent-class memberships v, an EM loop
alternates membership refinement (Bayes update of v against the outcome
density under the current class-specific coefficients) with one weighted
lasso-GLM fit per class over ALL studies' subjects, yielding pooled
coefficients B.

Step 2 (bias correction): the same EM shape runs on the target study alone,
restarting from the target memberships, fitting per-class corrections Delta
with x'B_c as a fixed per-class offset.  The target-specific coefficients
are B0 = B + Delta.

Both loops keep the per-class penalty fixed on the marginal scale
(loss normalized by the row count), so each EM iteration provably does not
increase the penalized marginal objective

    (1/n) * sum_i -log( sum_c v_ic f(y_i | eta_ic) ) + sum_c lam_c ||beta_c||_1 .
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._rng import substream
from .core import (
    EPS_CLIP,
    CoefficientMatrix,
    GlmFamily,
    MembershipMatrix,
    Study,
    StudyCollection,
    clip_rows,
    log_sum_exp_rows,
    sorted_row_sums,
    sorted_square_norm,
)
from .glm import WeightedGlmProblem, solve_weighted_lasso_glm
from .lca import (
    LcaFitConfig,
    LcaModel,
    fit_lca,
    initial_memberships,
    lca_model_from_dict,
    lca_model_to_dict,
    membership_for_pattern,
)

DEFAULT_TAU = 1e-4
DEFAULT_MAX_EM_ITER = 100
DEFAULT_CV_FOLDS = 5
DEFAULT_CV_GRID = tuple(np.logspace(np.log10(0.01), np.log10(10.0), 10))

# A class whose total weight mass falls below 10 * p * EPS_CLIP in some
# M-step is frozen for that iteration instead of being refit.
DEGENERATE_MASS_FACTOR = 10.0


@dataclass(frozen=True)
class TransferConfig:
    """Settings for the two-step transfer fit.

    lambda_pool / lambda_bias   "auto" (per-class CV), a scalar, or a
                                per-class sequence; resolved values sit on
                                the marginal scale (loss / row count)
    tau                         relative-change stopping threshold for both
                                EM loops
    max_em_iter                 iteration cap M for both loops
    one_step                    run each loop exactly once with the initial
                                memberships (equivalent to max_em_iter=1)
    cv_folds                    folds for "auto" tuning (>= 2)
    cv_grid                     multipliers c for the candidate penalties
                                c * sqrt(log p / n_eff)
    fit_intercept               include an unpenalized per-class intercept
    seed                        master seed for the cv-folds substream (and
                                the LCA restarts when none are supplied)
    """

    lambda_pool: object = "auto"
    lambda_bias: object = "auto"
    tau: float = DEFAULT_TAU
    max_em_iter: int = DEFAULT_MAX_EM_ITER
    one_step: bool = False
    cv_folds: int = DEFAULT_CV_FOLDS
    cv_grid: tuple = DEFAULT_CV_GRID
    fit_intercept: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.max_em_iter < 1:
            raise ValueError("max_em_iter must be >= 1")
        for name in ("lambda_pool", "lambda_bias"):
            val = getattr(self, name)
            if isinstance(val, str):
                if val != "auto":
                    raise ValueError(f"{name} must be 'auto', a scalar, or a sequence")
                if self.cv_folds < 2:
                    raise ValueError("cv_folds must be >= 2 when tuning is 'auto'")
            else:
                arr = np.atleast_1d(np.asarray(val, dtype=float))
                if np.any(np.isnan(arr)) or np.any(arr < 0):
                    raise ValueError(f"{name} values must be >= 0")
        if len(self.cv_grid) < 1 or any(c <= 0 for c in self.cv_grid):
            raise ValueError("cv_grid multipliers must be positive")

    @property
    def em_iter_budget(self) -> int:
        return 1 if self.one_step else self.max_em_iter


# ---------------------------------------------------------------------------
# Membership refinement (EM E-step)
# ---------------------------------------------------------------------------


def _refined_rows(family, y, X, v_rows, coef, offset_coef=None):
    """Bayes update of membership rows against the outcome density."""
    eta = coef.linear_predictor(X)
    if offset_coef is not None:
        eta = eta + offset_coef.linear_predictor(X)
    log_w = np.log(v_rows) + family.log_density(y[:, None], eta)
    w = np.exp(log_w - log_sum_exp_rows(log_w)[:, None])
    return clip_rows(w)


def e_step_weights(
    family: GlmFamily,
    memberships: MembershipMatrix,
    coef: CoefficientMatrix,
    data: StudyCollection,
    offset_coef: CoefficientMatrix = None,
) -> MembershipMatrix:
    """Refine memberships with the outcome likelihood: w ~ v * f(y | x, c)."""
    if memberships.n_studies != data.K + 1:
        raise ValueError("memberships do not match the study collection")
    blocks = tuple(
        _refined_rows(family, s.outcomes, s.predictors, block, coef, offset_coef)
        for s, block in zip(data.studies, memberships.probs)
    )
    return MembershipMatrix(probs=blocks, stage="refined_w")


# ---------------------------------------------------------------------------
# Penalized marginal objective (the quantity EM descends on)
# ---------------------------------------------------------------------------


def penalized_mixture_objective(
    family: GlmFamily,
    y: np.ndarray,
    X: np.ndarray,
    v_rows: np.ndarray,
    coef: CoefficientMatrix,
    lambdas: np.ndarray,
    offset_coef: CoefficientMatrix = None,
) -> float:
    """(1/n) * sum_i -log sum_c v_ic f(y_i | eta_ic)  +  sum_c lam_c ||values_c||_1."""
    eta = coef.linear_predictor(X)
    if offset_coef is not None:
        eta = eta + offset_coef.linear_predictor(X)
    log_mix = log_sum_exp_rows(np.log(v_rows) + family.log_density(y[:, None], eta))
    loss = -float(log_mix.sum()) / y.shape[0]
    lambdas = np.asarray(lambdas, dtype=float)
    terms = []
    for c in range(coef.n_classes):
        l1 = float(np.abs(coef.values[:, c]).sum())
        if l1 > 0.0:
            terms.append(lambdas[c] * l1)
    if not terms:
        return loss
    # summing the per-class terms in sorted order keeps the objective exactly
    # invariant under class relabeling
    return loss + float(np.sort(np.asarray(terms)).sum())


# ---------------------------------------------------------------------------
# Shared EM driver for both stages
# ---------------------------------------------------------------------------


def _design(X: np.ndarray, fit_intercept: bool):
    n, p = X.shape
    if fit_intercept:
        design = np.column_stack([np.ones(n), X])
        mask = np.concatenate([[False], np.ones(p, dtype=bool)])
    else:
        design = X
        mask = np.ones(p, dtype=bool)
    return design, mask


def _coef_from_state(theta: np.ndarray, fit_intercept: bool, role: str) -> CoefficientMatrix:
    if fit_intercept:
        return CoefficientMatrix(values=theta[1:], intercept=theta[0], role=role)
    return CoefficientMatrix(values=theta, intercept=None, role=role)


def _state_from_coef(coef: CoefficientMatrix, fit_intercept: bool) -> np.ndarray:
    if fit_intercept:
        return coef.stacked_state()
    return coef.values.copy()


def _mixture_em(
    family: GlmFamily,
    y: np.ndarray,
    X: np.ndarray,
    v_rows: np.ndarray,
    lambdas: np.ndarray,
    *,
    role: str,
    offsets_by_class: np.ndarray = None,
    offset_coef: CoefficientMatrix = None,
    tau: float = DEFAULT_TAU,
    max_iter: int = DEFAULT_MAX_EM_ITER,
    fit_intercept: bool = True,
):
    """EM loop shared by the pooling and bias-correction stages.

    Iteration t fits, per class c, a weighted lasso GLM with weights w_ic
    (w = v on the first pass, the Bayes-refined memberships afterwards); the
    per-class penalty lam_c stays fixed on the marginal scale, so the solver
    is handed lam_c * n / mass_c.  Stops when the relative parameter change
    drops to tau (absolute change when the previous state is zero) or after
    max_iter rounds.  Returns (coef, weights_used, trace, n_iter).
    """
    n, p = X.shape
    C = v_rows.shape[1]
    design, mask = _design(X, fit_intercept)
    theta = np.zeros((design.shape[1], C))
    coef = _coef_from_state(theta, fit_intercept, role)
    lambdas = np.asarray(lambdas, dtype=float)
    degenerate_mass = DEGENERATE_MASS_FACTOR * p * EPS_CLIP

    trace = []
    w_rows = v_rows
    n_iter = 0
    for t in range(1, max_iter + 1):
        n_iter = t
        if t > 1:
            w_rows = _refined_rows(family, y, X, v_rows, coef, offset_coef)
        theta_new = theta.copy()
        for c in range(C):
            w_c = w_rows[:, c]
            mass = float(w_c.sum())
            if mass < degenerate_mass:
                warnings.warn(
                    f"class {c} carries weight mass {mass:.3e} < {degenerate_mass:.3e}; "
                    "its coefficients are frozen for this iteration",
                    RuntimeWarning,
                )
                continue
            if not np.isfinite(lambdas[c]):
                # Infinite penalty pins the whole class (intercept included)
                # at zero: the correction stage treats it as "skip".
                theta_new[:, c] = 0.0
                continue
            prob = WeightedGlmProblem(
                family=family,
                X=design,
                y=y,
                weights=w_c,
                lam=lambdas[c] * n / mass,
                penalize_mask=mask,
                offset=None if offsets_by_class is None else offsets_by_class[:, c],
            )
            sol = solve_weighted_lasso_glm(prob, init=theta[:, c])
            theta_new[:, c] = sol.beta
        coef = _coef_from_state(theta_new, fit_intercept, role)
        trace.append(
            penalized_mixture_objective(
                family, y, X, v_rows, coef,
                np.where(np.isfinite(lambdas), lambdas, 0.0),
                offset_coef,
            )
        )
        denom = sorted_square_norm(theta)
        diff = sorted_square_norm(theta_new - theta)
        theta = theta_new
        if (diff <= tau * denom) if denom > 0 else (sorted_square_norm(theta_new) <= tau):
            break
    return coef, w_rows, trace, n_iter


# ---------------------------------------------------------------------------
# Penalty resolution and cross-validated tuning
# ---------------------------------------------------------------------------


def lambda_scale(p: int, n_eff: int) -> float:
    """Theory-guided penalty scale sqrt(log p / n_eff)."""
    return math.sqrt(math.log(max(p, 2)) / n_eff)


def _stratified_folds(study_index: np.ndarray, cv_folds: int, rng) -> np.ndarray:
    fold = np.empty(study_index.shape[0], dtype=int)
    for k in np.unique(study_index):
        idx = np.flatnonzero(study_index == k)
        perm = rng.permutation(idx)
        fold[perm] = np.arange(perm.size) % cv_folds
    return fold


def _make_folds(y, study_index, cv_folds, family, seed):
    """Stratified-by-study folds; refolds (up to 5 tries) while any fold is
    empty or, for logistic outcomes, single-valued in y."""
    for attempt in range(5):
        rng = substream(seed, "cv-folds", attempt)
        fold = _stratified_folds(study_index, cv_folds, rng)
        ok = True
        for f in range(cv_folds):
            in_f = fold == f
            if not np.any(in_f):
                ok = False
                break
            if family.kind == "logistic" and np.unique(y[in_f]).size < 2:
                ok = False
                break
        if ok:
            return fold
    raise RuntimeError(
        f"could not build {cv_folds} usable CV folds after 5 attempts "
        "(a fold stayed empty or single-valued in y)"
    )


def auto_tune_lambda(
    data: StudyCollection,
    memberships: MembershipMatrix,
    family: GlmFamily,
    stage: str,
    *,
    grid=DEFAULT_CV_GRID,
    cv_folds: int = DEFAULT_CV_FOLDS,
    seed: int = 0,
    offsets_by_class: np.ndarray = None,
    fit_intercept: bool = True,
) -> np.ndarray:
    """Per-class penalty levels c* sqrt(log p / n_eff) selected by
    cross-validated weighted deviance.

    stage "pool" tunes over all studies (n_eff = total rows); stage "bias"
    tunes on the target study alone (n_eff = n0) with the pooled-stage
    linear predictors passed as per-class offsets.  Folds are stratified
    within study and shared across classes and candidates.
    """
    if stage not in ("pool", "bias"):
        raise ValueError("stage must be 'pool' or 'bias'")
    if cv_folds < 2:
        raise ValueError("cv_folds must be >= 2")
    if stage == "pool":
        y, X, _, study_index = data.stacked()
        v_rows = memberships.stacked()
        n_eff = data.n_total
    else:
        tgt = data.target
        y, X = tgt.outcomes, tgt.predictors
        study_index = np.zeros(tgt.n, dtype=int)
        v_rows = memberships.target_block()
        n_eff = data.n0
        if offsets_by_class is None:
            raise ValueError("bias-stage tuning needs per-class offsets")
    n, p = X.shape
    C = v_rows.shape[1]
    if offsets_by_class is not None and offsets_by_class.shape != (n, C):
        raise ValueError("offsets_by_class must be (n, C)")

    candidates = np.sort(np.asarray(grid, dtype=float))[::-1] * lambda_scale(p, n_eff)
    fold = _make_folds(y, study_index, cv_folds, family, seed)
    design, mask = _design(X, fit_intercept)

    chosen = np.empty(C)
    for c in range(C):
        w_c = v_rows[:, c]
        loss_sum = np.zeros(candidates.size)
        mass_sum = np.zeros(candidates.size)
        for f in range(cv_folds):
            tr = fold != f
            va = ~tr
            n_tr = int(tr.sum())
            mass_tr = float(w_c[tr].sum())
            beta = np.zeros(design.shape[1])
            off_tr = None if offsets_by_class is None else offsets_by_class[tr, c]
            off_va = 0.0 if offsets_by_class is None else offsets_by_class[va, c]
            for i, lam in enumerate(candidates):
                prob = WeightedGlmProblem(
                    family=family,
                    X=design[tr],
                    y=y[tr],
                    weights=w_c[tr],
                    lam=lam * n_tr / mass_tr,
                    penalize_mask=mask,
                    offset=off_tr,
                )
                beta = solve_weighted_lasso_glm(prob, init=beta).beta
                eta_va = off_va + design[va] @ beta
                ll = -y[va] * eta_va + family.log_partition(eta_va)
                loss_sum[i] += float(w_c[va] @ ll)
                mass_sum[i] += float(w_c[va].sum())
        scores = loss_sum / mass_sum
        # Ties resolve toward the larger (more parsimonious) penalty, which
        # comes first in the descending candidate order.
        chosen[c] = candidates[int(np.argmin(scores))]
    return chosen


def _resolve_lambda(value, n_classes, tune) -> np.ndarray:
    """Normalize a lambda setting ('auto' | scalar | per-class sequence)."""
    if isinstance(value, str):
        return np.asarray(tune(), dtype=float)
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(n_classes, float(arr[0]))
    if arr.shape != (n_classes,):
        raise ValueError("per-class lambda must have one entry per class")
    return arr.copy()


# ---------------------------------------------------------------------------
# Public stage wrappers
# ---------------------------------------------------------------------------


def joint_estimate(
    data: StudyCollection,
    memberships: MembershipMatrix,
    config: TransferConfig,
    family: GlmFamily,
    lambdas: np.ndarray = None,
):
    """Pooling stage: EM over all studies.  `lambdas` must already be
    resolved to per-class numbers (fit_targeted_psm handles "auto").
    Returns (B, refined_weights, trace, n_iter, lambdas)."""
    if memberships.n_studies != data.K + 1:
        raise ValueError("memberships do not match the study collection")
    C = memberships.n_classes
    if lambdas is None:
        if isinstance(config.lambda_pool, str):
            raise ValueError("lambda_pool is 'auto'; resolve it before joint_estimate")
        lambdas = _resolve_lambda(config.lambda_pool, C, None)
    y, X, _, _ = data.stacked()
    coef, w_rows, trace, n_iter = _mixture_em(
        family, y, X, memberships.stacked(), lambdas,
        role="pooled_B",
        tau=config.tau,
        max_iter=config.em_iter_budget,
        fit_intercept=config.fit_intercept,
    )
    slices = data.row_slices()
    refined = MembershipMatrix(
        probs=tuple(w_rows[s] for s in slices), stage="refined_w"
    )
    return coef, refined, trace, n_iter, lambdas


def bias_correct(
    data: StudyCollection,
    memberships: MembershipMatrix,
    pooled: CoefficientMatrix,
    config: TransferConfig,
    family: GlmFamily,
    lambdas: np.ndarray = None,
):
    """Correction stage: EM on the target study with x'B_c as per-class
    offset, restarting from the target's initial memberships.
    Returns (Delta, trace, n_iter, lambdas)."""
    C = memberships.n_classes
    if lambdas is None:
        if isinstance(config.lambda_bias, str):
            raise ValueError("lambda_bias is 'auto'; resolve it before bias_correct")
        lambdas = _resolve_lambda(config.lambda_bias, C, None)
    tgt = data.target
    if np.all(np.isinf(lambdas)):
        # Infinite penalty: no correction at all, Delta == 0 exactly.
        delta = CoefficientMatrix(
            values=np.zeros_like(pooled.values), role="correction_Delta"
        )
        return delta, (), 0, lambdas
    offsets = pooled.linear_predictor(tgt.predictors)
    coef, _, trace, n_iter = _mixture_em(
        family, tgt.outcomes, tgt.predictors, memberships.target_block(), lambdas,
        role="correction_Delta",
        offsets_by_class=offsets,
        offset_coef=pooled,
        tau=config.tau,
        max_iter=config.em_iter_budget,
        fit_intercept=config.fit_intercept,
    )
    return coef, trace, n_iter, lambdas


# ---------------------------------------------------------------------------
# TransferFit and the full pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransferFit:
    """Everything the two-step fit produced.

    b_pooled, delta, b_target   coefficient matrices with
                                b_target = b_pooled + delta (exact addition)
    refined_weights             memberships used by the final pooled M-step
    lca_model                   the latent class model behind the memberships
    """

    b_pooled: CoefficientMatrix
    delta: CoefficientMatrix
    b_target: CoefficientMatrix
    refined_weights: MembershipMatrix  # None on fits restored from disk
    lca_model: LcaModel
    family: GlmFamily
    lambda_pool: np.ndarray
    lambda_bias: np.ndarray
    trace_joint: tuple
    trace_bias: tuple
    n_iter_joint: int
    n_iter_bias: int
    fit_intercept: bool = True

    @property
    def n_classes(self) -> int:
        return self.b_target.n_classes


def fit_targeted_psm(
    data: StudyCollection,
    n_classes: int,
    config: TransferConfig = None,
    family: GlmFamily = None,
    lca_model: LcaModel = None,
    lca_config: LcaFitConfig = None,
) -> TransferFit:
    """Run the full two-step procedure on a study collection.

    A pre-fitted LcaModel skips step 1; otherwise the joint latent class
    model is fitted here (seeded from lca_config, falling back to the
    transfer seed).  With n_classes=1 the membership model is the trivial
    single-class one and the procedure reduces to pooled lasso + correction.
    """
    config = config or TransferConfig()
    family = family or GlmFamily.logistic()
    for s in data.studies:
        family.validate_outcomes(s.outcomes)
    C = int(n_classes)
    if lca_model is None:
        cfg = lca_config or LcaFitConfig(seed=config.seed)
        lca_model = fit_lca(data, C, cfg)
    else:
        if lca_model.n_classes != C:
            raise ValueError("pre-fitted LCA model has a different class count")
        if lca_model.n_studies != data.K + 1:
            raise ValueError("pre-fitted LCA model covers a different study count")
        if lca_model.n_structure_vars != data.q:
            raise ValueError("pre-fitted LCA model has a different q")
    v = initial_memberships(lca_model, data)

    lam_pool = _resolve_lambda(
        config.lambda_pool,
        C,
        lambda: auto_tune_lambda(
            data, v, family, "pool",
            grid=config.cv_grid, cv_folds=config.cv_folds, seed=config.seed,
            fit_intercept=config.fit_intercept,
        ),
    )
    b_pooled, refined, trace_j, it_j, _ = joint_estimate(
        data, v, config, family, lambdas=lam_pool
    )

    if isinstance(config.lambda_bias, str):
        offsets = b_pooled.linear_predictor(data.target.predictors)
        lam_bias = auto_tune_lambda(
            data, v, family, "bias",
            grid=config.cv_grid, cv_folds=config.cv_folds, seed=config.seed,
            offsets_by_class=offsets, fit_intercept=config.fit_intercept,
        )
    else:
        lam_bias = _resolve_lambda(config.lambda_bias, C, None)
    delta, trace_b, it_b, _ = bias_correct(
        data, v, b_pooled, config, family, lambdas=lam_bias
    )

    b_target = CoefficientMatrix(
        values=b_pooled.values + delta.values,
        intercept=b_pooled.intercept + delta.intercept,
        role="target_B0",
    )
    return TransferFit(
        b_pooled=b_pooled,
        delta=delta,
        b_target=b_target,
        refined_weights=refined,
        lca_model=lca_model,
        family=family,
        lambda_pool=lam_pool,
        lambda_bias=lam_bias,
        trace_joint=tuple(trace_j),
        trace_bias=tuple(trace_b),
        n_iter_joint=it_j,
        n_iter_bias=it_b,
        fit_intercept=config.fit_intercept,
    )


def predict_risk(fit: TransferFit, x_new: np.ndarray, z_new: np.ndarray):
    """Membership-weighted outcome prediction for new target-study subjects:
    sum_c g'(x' B0_c) * P(class = c | z, target mixing).

    Accepts single vectors (p,), (q,) or batches (n, p), (n, q); returns a
    scalar or an (n,) array accordingly.
    """
    x = np.asarray(x_new, dtype=float)
    z = np.asarray(z_new, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    Z = np.atleast_2d(z)
    if X.shape[0] != Z.shape[0]:
        raise ValueError("x_new and z_new must cover the same subjects")
    v_star = membership_for_pattern(fit.lca_model, Z, study_row=0)
    mu = fit.family.mean(fit.b_target.linear_predictor(X))
    risk = sorted_row_sums(mu * v_star)
    return float(risk[0]) if single else risk


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _coef_to_dict(coef: CoefficientMatrix) -> dict:
    return {
        "values": coef.values.tolist(),
        "intercept": coef.intercept.tolist(),
        "role": coef.role,
    }


def _coef_from_dict(payload: dict) -> CoefficientMatrix:
    return CoefficientMatrix(
        values=np.asarray(payload["values"], dtype=float),
        intercept=np.asarray(payload["intercept"], dtype=float),
        role=payload["role"],
    )


def transfer_fit_to_dict(fit: TransferFit) -> dict:
    """JSON payload with every coefficient matrix, both traces and the LCA
    model.  Per-subject refined weights are data-sized and stay out of the
    file; they are reproducible from the stored model and the dataset."""
    return {
        "kind": "transfer_fit",
        "family": fit.family.kind,
        "dispersion": fit.family.dispersion,
        "fit_intercept": fit.fit_intercept,
        "b_pooled": _coef_to_dict(fit.b_pooled),
        "delta": _coef_to_dict(fit.delta),
        "b_target": _coef_to_dict(fit.b_target),
        "lambda_pool": fit.lambda_pool.tolist(),
        "lambda_bias": [float(v) for v in fit.lambda_bias],
        "trace_joint": list(fit.trace_joint),
        "trace_bias": list(fit.trace_bias),
        "n_iter_joint": fit.n_iter_joint,
        "n_iter_bias": fit.n_iter_bias,
        "lca_model": lca_model_to_dict(fit.lca_model),
    }


def transfer_fit_from_dict(payload: dict) -> TransferFit:
    if payload.get("kind") != "transfer_fit":
        raise ValueError("not a serialized transfer fit")
    family = GlmFamily(payload["family"], float(payload.get("dispersion", 1.0)))
    return TransferFit(
        b_pooled=_coef_from_dict(payload["b_pooled"]),
        delta=_coef_from_dict(payload["delta"]),
        b_target=_coef_from_dict(payload["b_target"]),
        refined_weights=None,
        lca_model=lca_model_from_dict(payload["lca_model"]),
        family=family,
        lambda_pool=np.asarray(payload["lambda_pool"], dtype=float),
        lambda_bias=np.asarray(payload["lambda_bias"], dtype=float),
        trace_joint=tuple(payload.get("trace_joint", ())),
        trace_bias=tuple(payload.get("trace_bias", ())),
        n_iter_joint=int(payload.get("n_iter_joint", 0)),
        n_iter_bias=int(payload.get("n_iter_bias", 0)),
        fit_intercept=bool(payload.get("fit_intercept", True)),
    )


def save_transfer_fit(fit: TransferFit, path) -> None:
    Path(path).write_text(json.dumps(transfer_fit_to_dict(fit), indent=2) + "\n")


def load_transfer_fit(path) -> TransferFit:
    return transfer_fit_from_dict(json.loads(Path(path).read_text()))
