import itertools

import numpy as np
import pytest

from targeted_psm.baselines import MethodId
from targeted_psm.evaluate import (
    MAX_ALIGN_CLASSES,
    ExperimentReport,
    ReportRow,
    UndefinedMetricError,
    _mean_se,
    _replicate_seed,
    align_classes,
    auc,
    coef_mse,
    read_report_rows,
    run_experiment,
    run_replicate,
    write_report_rows,
)
from targeted_psm.lca import LcaFitConfig
from targeted_psm.simulate import scenario_preset
from targeted_psm.transfer import TransferConfig

from _oracles import pairwise_auc


def _stat_fields(row):
    # everything except the wall-clock runtime
    return (
        row.scenario, row.method, row.replicate, row.seed,
        row.n_sources, row.mse, row.auc, row.permutation, row.error,
    )


MINI = scenario_preset(
    "figure1-mini", n0=150, n_k=120, K=1, p=10, seed=0,
    support_sizes=(1, 2, 4),
)
FAST = TransferConfig(lambda_pool=0.05, lambda_bias=0.05, max_em_iter=10, seed=0)
FAST_LCA = LcaFitConfig(n_starts=2, max_iter=80, seed=0)


# ---------------------------------------------------------------------------
# Alignment and metrics
# ---------------------------------------------------------------------------


def test_align_classes_matches_assignment_oracle(rng):
    scipy_opt = pytest.importorskip("scipy.optimize")
    for trial in range(20):
        T = rng.normal(size=(6, 4))
        E = T[:, rng.permutation(4)] + 0.05 * rng.normal(size=(6, 4))
        perm, aligned = align_classes(E, T)
        assert np.array_equal(aligned, E[:, list(perm)])
        # Hungarian oracle on the column-pair cost matrix
        cost = np.array(
            [[np.sum((E[:, i] - T[:, j]) ** 2) for i in range(4)] for j in range(4)]
        )
        rows, cols = scipy_opt.linear_sum_assignment(cost)
        oracle_cost = float(cost[rows, cols].sum())
        got_cost = float(np.sum((aligned - T) ** 2))
        assert got_cost == pytest.approx(oracle_cost, rel=1e-12, abs=1e-12)


def test_align_classes_validation(rng):
    with pytest.raises(ValueError, match="same shape"):
        align_classes(rng.normal(size=(4, 2)), rng.normal(size=(4, 3)))
    too_many = rng.normal(size=(2, MAX_ALIGN_CLASSES + 1))
    with pytest.raises(ValueError, match="exhaustive"):
        align_classes(too_many, too_many)


def test_coef_mse_zero_on_permuted_truth(rng):
    T = rng.normal(size=(7, 3))
    for perm in itertools.permutations(range(3)):
        assert coef_mse(T[:, list(perm)], T) == 0.0
    E = T + 0.1
    assert coef_mse(E, T) == pytest.approx(0.01, rel=1e-10)


def test_auc_hand_cases():
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    assert auc([0.8, 0.6, 0.4, 0.2], [1, 1, 0, 0]) == 1.0
    assert auc([0.2, 0.4, 0.6, 0.8], [1, 1, 0, 0]) == 0.0
    assert auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5
    assert auc([0.3, 0.3, 0.7], [0, 1, 1]) == pytest.approx(0.75)  # one tie pair


def test_auc_matches_pairwise_oracle(rng):
    for trial in range(25):
        n = int(rng.integers(5, 60))
        scores = np.round(rng.normal(size=n), 1)  # force ties
        labels = rng.integers(0, 2, size=n).astype(float)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        assert auc(scores, labels) == pytest.approx(
            pairwise_auc(scores, labels), abs=1e-12
        )


def test_auc_invariant_to_monotone_transform(rng):
    scores = rng.normal(size=40)
    labels = (rng.random(40) < 0.4).astype(float)
    labels[0], labels[1] = 0.0, 1.0
    a = auc(scores, labels)
    assert auc(3.0 * scores - 1.0, labels) == pytest.approx(a, abs=1e-12)
    assert auc(1 / (1 + np.exp(-scores)), labels) == pytest.approx(a, abs=1e-12)


def test_auc_error_paths():
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError, match="binary"):
        auc([0.1, 0.2], [1, 2])
    with pytest.raises(ValueError, match="1-d"):
        auc([[0.1], [0.2]], [[1], [0]])
    assert isinstance(UndefinedMetricError("x"), ValueError)


def test_mean_se():
    mean, se = _mean_se([1.0, 2.0, 3.0])
    assert mean == 2.0
    assert se == pytest.approx(1.0 / np.sqrt(3))
    mean, se = _mean_se([4.0])
    assert mean == 4.0 and se is None
    assert _mean_se([]) == (None, None)


# ---------------------------------------------------------------------------
# Report I/O
# ---------------------------------------------------------------------------


def test_report_csv_roundtrip(tmp_path):
    rows = [
        ReportRow(
            scenario="a", method="targeted_psm", replicate=0, seed=123,
            n_sources=2, mse=0.5, auc=0.75, runtime_s=1.25,
            permutation=(1, 0, 2),
        ),
        ReportRow(
            scenario="a", method="trans_glm", replicate=1, seed=456,
            n_sources=2, error="boom: division by zero",
        ),
    ]
    path = tmp_path / "rows.csv"
    write_report_rows(path, rows)
    back = read_report_rows(path)
    assert back == rows
    # append mode extends without rewriting the header
    write_report_rows(path, [rows[0]], append=True)
    assert read_report_rows(path) == rows + [rows[0]]


def test_summarize_on_handbuilt_rows():
    rows = (
        ReportRow("s", "m", 0, 1, 2, mse=0.2, auc=0.6),
        ReportRow("s", "m", 1, 2, 2, mse=0.4, auc=0.8),
        ReportRow("s", "m", 2, 3, 2, error="failed"),
        ReportRow("s", "other", 0, 1, 2, auc=0.7),
    )
    summary = ExperimentReport(rows=rows).summarize()
    assert len(summary) == 2
    first = summary[0]
    assert (first.scenario, first.method) == ("s", "m")
    assert first.n_ok == 2 and first.n_fail == 1
    assert first.mse_mean == pytest.approx(0.3)
    assert first.mse_se == pytest.approx(np.std([0.2, 0.4], ddof=1) / np.sqrt(2))
    assert first.auc_mean == pytest.approx(0.7)
    second = summary[1]
    assert second.method == "other"
    assert second.mse_mean is None and second.mse_se is None
    assert second.auc_mean == pytest.approx(0.7) and second.auc_se is None


def test_summary_csv(tmp_path):
    rows = (
        ReportRow("s", "m", 0, 1, 2, mse=0.2, auc=0.6),
        ReportRow("s", "m", 1, 2, 2, mse=0.4, auc=0.8),
    )
    report = ExperimentReport(rows=rows)
    path = tmp_path / "summary.csv"
    report.summary_to_csv(path)
    text = path.read_text().splitlines()
    assert text[0].startswith("scenario,method,")
    assert text[1].split(",")[0] == "s"
    report.to_csv(tmp_path / "rows.csv")
    assert read_report_rows(tmp_path / "rows.csv") == list(rows)


# ---------------------------------------------------------------------------
# Replicate harness
# ---------------------------------------------------------------------------


def test_replicate_seed_scenario_independent():
    assert _replicate_seed(0, 0) != _replicate_seed(0, 1)
    assert _replicate_seed(0, 3) == _replicate_seed(0, 3)
    assert _replicate_seed(1, 3) != _replicate_seed(0, 3)


def test_run_replicate_produces_rows_per_method():
    methods = [
        MethodId.TARGETED_PSM,
        MethodId.TARGETED_PSM_1,
        MethodId.LCA_GLM,
        MethodId.TRANS_GLM,
        MethodId.NAIVE_LASSO,
    ]
    rows = run_replicate(
        "mini", MINI, methods, replicate=0, test_n=120,
        transfer_config=FAST, lca_config=FAST_LCA,
    )
    assert [r.method for r in rows] == [m.value for m in methods]
    for r in rows:
        assert r.error is None, r.error
        assert r.scenario == "mini"
        assert r.n_sources == 1
        assert r.auc is not None and 0.0 <= r.auc <= 1.0
        assert r.runtime_s >= 0.0
    by_method = {r.method: r for r in rows}
    for m in ("targeted_psm", "targeted_psm_1", "lca_glm"):
        assert by_method[m].mse is not None
        assert sorted(by_method[m].permutation) == [0, 1, 2]
    for m in ("trans_glm", "naive_lasso"):
        assert by_method[m].mse is None
        assert by_method[m].permutation is None


def test_run_replicate_one_em_step_collapses_psm_variants():
    # with max_em_iter=1 the full procedure IS its one-step variant, and the
    # shared-tuning path inside run_replicate must keep them byte-identical
    cfg = TransferConfig(lambda_pool=0.05, lambda_bias=0.05, max_em_iter=1, seed=0)
    rows = run_replicate(
        "mini", MINI, [MethodId.TARGETED_PSM, MethodId.TARGETED_PSM_1],
        replicate=0, test_n=120, transfer_config=cfg, lca_config=FAST_LCA,
    )
    assert rows[0].mse == rows[1].mse
    assert rows[0].auc == rows[1].auc
    assert rows[0].permutation == rows[1].permutation


def test_run_replicate_shared_tuning_matches_per_method(tmp_path):
    # 'auto' tuning inside run_replicate shares one pool-stage CV between the
    # two mixture variants; that must equal what per-method tuning would give
    grid = (0.5, 2.0)
    auto_cfg = TransferConfig(
        lambda_pool="auto", lambda_bias=0.05, cv_folds=2, cv_grid=grid,
        max_em_iter=5, seed=0,
    )
    rows = run_replicate(
        "mini", MINI, [MethodId.TARGETED_PSM], replicate=0, test_n=120,
        transfer_config=auto_cfg, lca_config=FAST_LCA,
    )
    assert rows[0].error is None
    assert rows[0].mse is not None


def test_run_experiment_statistically_deterministic():
    scenarios = [("mini", MINI)]
    methods = [MethodId.TARGETED_PSM, MethodId.NAIVE_LASSO]
    kw = dict(
        replicates=2, test_n=100, master_seed=7,
        transfer_config=FAST, lca_config=FAST_LCA,
    )
    r1 = run_experiment(scenarios, methods, **kw)
    r2 = run_experiment(scenarios, methods, **kw)
    assert [_stat_fields(r) for r in r1.rows] == [_stat_fields(r) for r in r2.rows]
    assert len(r1.rows) == 4
    # different master seed changes the draws
    r3 = run_experiment(scenarios, methods, replicates=2, test_n=100,
                        master_seed=8, transfer_config=FAST, lca_config=FAST_LCA)
    assert [r.seed for r in r3.rows] != [r.seed for r in r1.rows]


def test_run_experiment_resume_and_sink():
    scenarios = [("mini", MINI)]
    methods = [MethodId.NAIVE_LASSO]
    seen = []
    report = run_experiment(
        scenarios, methods, replicates=3, test_n=100, master_seed=7,
        transfer_config=FAST, lca_config=FAST_LCA,
        completed={("mini", 1)}, row_sink=seen.append,
    )
    assert [r.replicate for r in report.rows] == [0, 2]
    assert [len(batch) for batch in seen] == [1, 1]
    assert _stat_fields(seen[0][0]) == _stat_fields(report.rows[0])


def test_run_experiment_failure_rate_guard():
    # trans_glm cannot run without sources: every replicate fails
    cfg = scenario_preset(
        "figure1-mini", n0=120, n_k=50, K=0, p=8, seed=0, support_sizes=(1, 2, 4)
    )
    with pytest.raises(RuntimeError, match="source"):
        run_experiment(
            [("sourceless", cfg)], [MethodId.TRANS_GLM],
            replicates=2, test_n=80, master_seed=0,
            transfer_config=FAST, lca_config=FAST_LCA,
        )
    # ...but with a forgiving threshold the errors are recorded as rows
    report = run_experiment(
        [("sourceless", cfg)], [MethodId.TRANS_GLM],
        replicates=2, test_n=80, master_seed=0,
        transfer_config=FAST, lca_config=FAST_LCA, max_failure_rate=1.0,
    )
    assert all(r.error is not None for r in report.rows)
    summary = report.summarize()
    assert summary[0].n_fail == 2 and summary[0].n_ok == 0
