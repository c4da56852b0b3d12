"""Evaluation: class alignment, coefficient error, AUC, and the paired
replicate harness that compares methods on simulated scenarios."""

from __future__ import annotations

import csv
import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._rng import substream
from .baselines import MIXTURE_METHODS, MethodId, fit_method
from .core import CoefficientMatrix, GlmFamily
from .lca import LcaFitConfig, fit_lca, initial_memberships
from .simulate import ScenarioConfig, generate_scenario, generate_target_test
from .transfer import TransferConfig, auto_tune_lambda


class UndefinedMetricError(ValueError):
    """Raised when a metric is undefined for the given inputs."""


MAX_ALIGN_CLASSES = 8


def _as_values(mat) -> np.ndarray:
    if isinstance(mat, CoefficientMatrix):
        return mat.values
    return np.asarray(mat, dtype=float)


def align_classes(estimate, truth):
    """Best column permutation of `estimate` against `truth` by exhaustive
    search over the Frobenius distance.  Returns (perm, aligned) with
    aligned[:, j] = estimate[:, perm[j]]."""
    E = _as_values(estimate)
    T = _as_values(truth)
    if E.shape != T.shape:
        raise ValueError("estimate and truth must have the same shape")
    C = E.shape[1]
    if C > MAX_ALIGN_CLASSES:
        raise ValueError(f"alignment is exhaustive; C must be <= {MAX_ALIGN_CLASSES}")
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(C)):
        cost = float(np.sum(np.square(E[:, perm] - T)))
        if cost < best_cost:
            best_perm, best_cost = perm, cost
    return best_perm, E[:, best_perm]


def coef_mse(estimate, truth) -> float:
    """Mean squared coefficient error after class alignment:
    ||aligned - truth||_F^2 / (p * C)."""
    T = _as_values(truth)
    _, aligned = align_classes(estimate, truth)
    p, C = T.shape
    return float(np.sum(np.square(aligned - T))) / (p * C)


def auc(scores, labels) -> float:
    """Area under the ROC curve: P(score+ > score-) + P(tie)/2, computed
    exactly from average ranks (ties handled, all-tied scores give 0.5)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-d of equal length")
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise ValueError("labels must be binary")
    n = labels.size
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both label classes present")
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)  # average of 1-based ranks
        i = j
    rank_sum_pos = float(ranks[labels == 1.0].sum())
    u = rank_sum_pos - 0.5 * n_pos * (n_pos + 1)
    return u / (n_pos * n_neg)


# ---------------------------------------------------------------------------
# Replicate harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    scenario: str
    method: str
    replicate: int
    seed: int
    n_sources: int
    mse: float = None
    auc: float = None
    runtime_s: float = None
    permutation: tuple = None
    error: str = None


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    method: str
    n_sources: int
    n_ok: int
    n_fail: int
    mse_mean: float = None
    mse_se: float = None
    auc_mean: float = None
    auc_se: float = None


REPORT_COLUMNS = (
    "scenario", "method", "replicate", "seed", "n_sources",
    "mse", "auc", "runtime_s", "permutation", "error",
)
SUMMARY_COLUMNS = (
    "scenario", "method", "n_sources", "n_ok", "n_fail",
    "mse_mean", "mse_se", "auc_mean", "auc_se",
)


def _mean_se(values):
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        return None, None
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else None
    return mean, se


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple

    def summarize(self) -> list:
        keys = []
        groups = {}
        for row in self.rows:
            key = (row.scenario, row.method, row.n_sources)
            if key not in groups:
                groups[key] = []
                keys.append(key)
            groups[key].append(row)
        out = []
        for key in keys:
            rows = groups[key]
            ok = [r for r in rows if r.error is None]
            mse_mean, mse_se = _mean_se([r.mse for r in ok if r.mse is not None])
            auc_mean, auc_se = _mean_se([r.auc for r in ok if r.auc is not None])
            out.append(
                SummaryRow(
                    scenario=key[0], method=key[1], n_sources=key[2],
                    n_ok=len(ok), n_fail=len(rows) - len(ok),
                    mse_mean=mse_mean, mse_se=mse_se,
                    auc_mean=auc_mean, auc_se=auc_se,
                )
            )
        return out

    def to_csv(self, path) -> None:
        write_report_rows(path, self.rows)

    def summary_to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SUMMARY_COLUMNS)
            for row in self.summarize():
                writer.writerow(
                    [
                        row.scenario, row.method, row.n_sources,
                        row.n_ok, row.n_fail,
                        _fmt(row.mse_mean), _fmt(row.mse_se),
                        _fmt(row.auc_mean), _fmt(row.auc_se),
                    ]
                )


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def write_report_rows(path, rows, append: bool = False) -> None:
    path = Path(path)
    mode = "a" if append and path.exists() else "w"
    with path.open(mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(REPORT_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.scenario, r.method, r.replicate, r.seed, r.n_sources,
                    _fmt(r.mse), _fmt(r.auc), _fmt(r.runtime_s),
                    "" if r.permutation is None else "|".join(map(str, r.permutation)),
                    "" if r.error is None else r.error,
                ]
            )


def read_report_rows(path) -> list:
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                ReportRow(
                    scenario=rec["scenario"],
                    method=rec["method"],
                    replicate=int(rec["replicate"]),
                    seed=int(rec["seed"]),
                    n_sources=int(rec["n_sources"]),
                    mse=float(rec["mse"]) if rec["mse"] else None,
                    auc=float(rec["auc"]) if rec["auc"] else None,
                    runtime_s=float(rec["runtime_s"]) if rec["runtime_s"] else None,
                    permutation=(
                        tuple(int(v) for v in rec["permutation"].split("|"))
                        if rec["permutation"]
                        else None
                    ),
                    error=rec["error"] or None,
                )
            )
    return rows


def _replicate_seed(master_seed: int, replicate: int) -> int:
    # Deliberately independent of the scenario id: replicate r uses the same
    # seed in every scenario of a grid (common random numbers).  Because the
    # generator draws each study from its own substream, scenarios that only
    # differ in K then share byte-identical target data, so across-scenario
    # contrasts isolate the studies that were added or changed.
    rng = substream(master_seed, "replicate", replicate)
    return int(rng.integers(0, 2**63 - 1))


def run_replicate(
    scenario_id: str,
    config: ScenarioConfig,
    methods,
    replicate: int,
    test_n: int,
    transfer_config: TransferConfig,
    lca_config: LcaFitConfig = None,
) -> list:
    """Fit every requested method on one fresh draw of the scenario and score
    it on a fresh test sample from the target population."""
    methods = [MethodId(m) for m in methods]
    seed = config.seed
    data, truth = generate_scenario(config)
    test_study, _ = generate_target_test(config, test_n)
    truth_b0 = truth["coefficients"][0].values
    family = config.glm_family()
    C = config.n_classes
    lca_cfg = lca_config or LcaFitConfig(seed=seed)

    # The full and one-pass procedures share step 1 and the pooling-stage
    # penalty search verbatim (same data, same memberships, same folds), so
    # fit the joint latent class model and tune lambda_pool once; both
    # methods then receive identical inputs and give identical stage-1 fits.
    psm_pair = (MethodId.TARGETED_PSM, MethodId.TARGETED_PSM_1)
    shared_lca = None
    shared_error = None
    shared_config = transfer_config
    if C > 1 and any(m in psm_pair for m in methods):
        try:
            shared_lca = fit_lca(data, C, lca_cfg)
            if isinstance(transfer_config.lambda_pool, str):
                v = initial_memberships(shared_lca, data)
                lam_pool = auto_tune_lambda(
                    data, v, family, "pool",
                    grid=transfer_config.cv_grid,
                    cv_folds=transfer_config.cv_folds,
                    seed=transfer_config.seed,
                    fit_intercept=transfer_config.fit_intercept,
                )
                shared_config = replace(
                    transfer_config, lambda_pool=tuple(float(l) for l in lam_pool)
                )
        except Exception as exc:  # recorded per dependent method below
            shared_error = f"{type(exc).__name__}: {exc}"

    rows = []
    for method in methods:
        t0 = time.perf_counter()
        try:
            if method in psm_pair and shared_error is not None:
                raise RuntimeError(shared_error)
            fitted = fit_method(
                method, data, C,
                config=shared_config if method in psm_pair else transfer_config,
                family=family,
                lca_model=shared_lca if method in psm_pair else None,
                lca_config=lca_cfg,
            )
            runtime = time.perf_counter() - t0
            mse_val, perm = None, None
            if method in MIXTURE_METHODS:
                perm, _ = align_classes(fitted.coef, truth_b0)
                mse_val = coef_mse(fitted.coef, truth_b0)
            auc_val = None
            if family.kind == "logistic":
                scores = fitted.scores(test_study.predictors, test_study.structure_vars)
                auc_val = auc(scores, test_study.outcomes)
            rows.append(
                ReportRow(
                    scenario=scenario_id, method=method.value, replicate=replicate,
                    seed=seed, n_sources=config.K,
                    mse=mse_val, auc=auc_val,
                    runtime_s=runtime, permutation=perm,
                )
            )
        except Exception as exc:
            rows.append(
                ReportRow(
                    scenario=scenario_id, method=method.value, replicate=replicate,
                    seed=seed, n_sources=config.K,
                    runtime_s=time.perf_counter() - t0,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return rows


def _replicate_task(args):
    return run_replicate(*args)


def run_experiment(
    scenarios,
    methods,
    replicates: int,
    test_n: int = 500,
    n_jobs: int = 1,
    master_seed: int = 0,
    transfer_config: TransferConfig = None,
    lca_config: LcaFitConfig = None,
    completed: set = None,
    row_sink=None,
    max_failure_rate: float = 0.2,
) -> ExperimentReport:
    """Paired comparison of methods over seeded replicates.

    scenarios    iterable of (scenario_id, ScenarioConfig); each replicate r
                 redraws every study (and the source sign matrices) from a
                 replicate-specific seed derived from master_seed
    completed    optional set of (scenario_id, replicate) to skip (resume)
    row_sink     optional callable receiving each finished replicate's rows
                 as they arrive (rows are still collected in the report)

    Results are deterministic given (scenarios, methods, replicates,
    master_seed) regardless of n_jobs.  Raises RuntimeError when more than
    `max_failure_rate` of the method-replicates fail.
    """
    scenarios = list(scenarios)
    transfer_config = transfer_config or TransferConfig()
    completed = completed or set()
    tasks = []
    for scenario_id, config in scenarios:
        for r in range(replicates):
            if (scenario_id, r) in completed:
                continue
            seed = _replicate_seed(master_seed, r)
            rep_cfg = replace(config, seed=seed)
            rep_transfer = replace(transfer_config, seed=seed)
            rep_lca = (
                replace(lca_config, seed=seed)
                if lca_config is not None
                else LcaFitConfig(seed=seed)
            )
            tasks.append(
                (scenario_id, rep_cfg, tuple(methods), r, test_n, rep_transfer, rep_lca)
            )

    results = []
    if n_jobs <= 1 or len(tasks) <= 1:
        for task in tasks:
            rows = _replicate_task(task)
            if row_sink is not None:
                row_sink(rows)
            results.append(rows)
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for rows in pool.map(_replicate_task, tasks):
                if row_sink is not None:
                    row_sink(rows)
                results.append(rows)

    all_rows = tuple(row for rows in results for row in rows)
    n_fail = sum(1 for row in all_rows if row.error is not None)
    if all_rows and n_fail > max_failure_rate * len(all_rows):
        failures = [row for row in all_rows if row.error is not None]
        raise RuntimeError(
            f"{n_fail}/{len(all_rows)} method-replicates failed "
            f"(first: {failures[0].error})"
        )
    return ExperimentReport(rows=all_rows)
