"""Cross-validation protocol, accuracy, and the ASO comparison machinery."""

import math

import numpy as np
import pytest

from conftest import tiny_config

from clstack import store
from clstack.evaluation import (
    EvalReport,
    accuracy,
    aso_epsilon_min,
    compare_all,
    kfold_split,
    run_cv,
    violation_ratio,
)
from clstack.training import TrainConfig


class TestKFold:
    def test_ten_into_five(self):
        splits = kfold_split(10, 5, seed=1)
        vals = [set(v.tolist()) for _, v in splits]
        assert all(len(v) == 2 for v in vals)
        assert set().union(*vals) == set(range(10))
        for i in range(5):
            for j in range(i + 1, 5):
                assert not vals[i] & vals[j]

    def test_train_val_disjoint_and_complementary(self):
        for train, val in kfold_split(23, 4, seed=7):
            assert not set(train.tolist()) & set(val.tolist())
            assert len(train) + len(val) == 23

    def test_same_seed_identical(self):
        a = kfold_split(17, 5, seed=3)
        b = kfold_split(17, 5, seed=3)
        for (ta, va), (tb, vb) in zip(a, b):
            assert np.array_equal(ta, tb) and np.array_equal(va, vb)

    def test_eleven_into_five_sizes(self):
        sizes = sorted(len(v) for _, v in kfold_split(11, 5, seed=0))
        assert sizes == [2, 2, 2, 2, 3]

    def test_too_few_samples(self):
        with pytest.raises(ValueError, match="split"):
            kfold_split(3, 5)


class TestAccuracy:
    def test_examples(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
        assert accuracy([1, 2, 3], [0, 0, 0]) == 0.0
        assert accuracy([1, 1, 1, 0], [1, 1, 0, 1]) == 0.5
        assert accuracy([0, 1, 1, 1], [0, 1, 1, 0]) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            accuracy([1, 2], [1, 2, 3])


def tiny_cv_setup(n=30, classes=2, separation=8.0):
    ds = store.synth_generate(
        n_samples=n, n_classes=classes, n_layers=12, hidden=32, separation=separation, seed=2
    )
    mcfg = tiny_config(n_classes=classes, variant="softmax")
    tcfg = TrainConfig(total_steps=6, warmup_steps=2, seed=0)
    return ds, mcfg, tcfg


class TestRunCV:
    def test_counts_and_grand_mean_identity(self):
        ds, mcfg, tcfg = tiny_cv_setup()
        report = run_cv(ds, mcfg, tcfg, seeds=[1, 2], k=3)
        assert len(report.accuracies) == 2
        assert all(len(row) == 3 for row in report.accuracies)
        assert report.grand_mean == pytest.approx(np.mean(report.seed_means), abs=1e-12)
        assert all(0.0 <= a <= 1.0 for row in report.accuracies for a in row)

    def test_reproducible(self):
        ds, mcfg, tcfg = tiny_cv_setup()
        a = run_cv(ds, mcfg, tcfg, seeds=[5], k=3)
        b = run_cv(ds, mcfg, tcfg, seeds=[5], k=3)
        assert a.to_json_dict() == b.to_json_dict()

    def test_parallel_matches_sequential(self):
        ds, mcfg, tcfg = tiny_cv_setup()
        seq = run_cv(ds, mcfg, tcfg, seeds=[1], k=4, n_workers=1)
        par = run_cv(ds, mcfg, tcfg, seeds=[1], k=4, n_workers=2)
        assert seq.to_json_dict() == par.to_json_dict()

    def test_failed_folds_recorded_and_excluded(self):
        ds, mcfg, _ = tiny_cv_setup()
        mcfg = tiny_config(n_classes=2, variant="trans-enc")
        diverging = TrainConfig(total_steps=10, warmup_steps=1, lr_max=1e160, cnn_lr=1e160)
        report = run_cv(ds, mcfg, diverging, seeds=[1], k=3)
        assert len(report.failures) == 3
        assert all(f["step"] >= 1 for f in report.failures)
        assert report.accuracies[0] == [None, None, None]
        assert report.seed_means == [None]
        assert report.grand_mean is None

    def test_json_round_trip(self):
        ds, mcfg, tcfg = tiny_cv_setup()
        report = run_cv(ds, mcfg, tcfg, seeds=[1], k=3, dataset="unit.clsb")
        back = EvalReport.from_json_dict(report.to_json_dict())
        assert back.to_json_dict() == report.to_json_dict()


class TestViolationRatio:
    def test_brute_force_oracle(self):
        # independent re-implementation straight from the definition
        def oracle(a, b, grid=1000):
            a, b = sorted(a), sorted(b)

            def inv_cdf(xs, t):
                return xs[min(max(math.ceil(t * len(xs)) - 1, 0), len(xs) - 1)]

            num = denom = 0.0
            for j in range(grid):
                t = (j + 0.5) / grid
                diff = inv_cdf(b, t) - inv_cdf(a, t)
                denom += diff * diff
                num += max(diff, 0.0) ** 2
            return num / denom if denom else 1.0

        rng = np.random.default_rng(0)
        for _ in range(10):
            a = rng.normal(size=int(rng.integers(2, 12))).tolist()
            b = rng.normal(size=int(rng.integers(2, 12))).tolist()
            assert violation_ratio(a, b) == pytest.approx(oracle(a, b), abs=1e-12)

    def test_half_violation_case(self):
        # quantile functions differ by +1 on half the grid, -1 on the other
        assert violation_ratio([1.0, 4.0], [2.0, 3.0]) == pytest.approx(0.5, abs=1e-12)


class TestAso:
    def test_strict_dominance(self):
        a = [0.9, 0.91, 0.92]
        b = [0.1, 0.11, 0.12]
        assert aso_epsilon_min(a, b).eps_min == 0.0

    def test_swapped_is_one(self):
        a = [0.9, 0.91, 0.92]
        b = [0.1, 0.11, 0.12]
        assert aso_epsilon_min(b, a).eps_min == 1.0

    def test_identical_samples_convention(self):
        a = [0.5, 0.6, 0.7]
        assert aso_epsilon_min(a, list(a)).eps_min == 1.0

    def test_bounds_and_errors(self):
        with pytest.raises(ValueError, match="nonempty"):
            aso_epsilon_min([], [1.0])
        with pytest.raises(ValueError, match="alpha"):
            aso_epsilon_min([1.0], [2.0], alpha=0.7)

    def test_result_fields(self):
        res = aso_epsilon_min([1.0, 2.0], [0.0, 0.5], alpha=0.01, n_bootstrap=200, seed=3)
        assert (res.n_a, res.n_b, res.n_bootstrap, res.alpha) == (2, 2, 200, 0.01)
        assert 0.0 <= res.eps_min <= 1.0

    def test_normal_shift_detected(self):
        rng = np.random.default_rng(42)
        hits = 0
        for trial in range(5):
            a = rng.normal(1.0, 1.0, size=50)
            b = rng.normal(0.0, 1.0, size=50)
            res = aso_epsilon_min(a, b, seed=trial, n_bootstrap=300)
            hits += res.eps_min < 0.5
        assert hits == 5

    def test_always_in_unit_interval(self):
        rng = np.random.default_rng(9)
        for trial in range(20):
            a = rng.normal(size=int(rng.integers(2, 30)))
            b = rng.normal(size=int(rng.integers(2, 30)))
            res = aso_epsilon_min(a, b, seed=trial, n_bootstrap=100)
            assert 0.0 <= res.eps_min <= 1.0


def report_with_means(model, means, dataset="d0"):
    return EvalReport(
        model=model,
        variant=model,
        dataset=dataset,
        seeds=list(range(len(means))),
        folds=5,
        accuracies=[[m] * 5 for m in means],
        seed_means=list(means),
        grand_mean=float(np.mean(means)),
        failures=[],
    )


class TestCompareAll:
    def test_bonferroni_count_for_five_models(self):
        reports = [
            report_with_means(f"m{i}", [0.9 - 0.15 * i + 0.001 * s for s in range(5)])
            for i in range(5)
        ]
        result = compare_all(reports, alpha=0.05)
        assert result.n_comparisons == 20
        assert result.adjusted_alpha == pytest.approx(0.05 / 20)

    def test_dominance_layout(self):
        reports = [
            report_with_means(f"m{i}", [0.9 - 0.2 * i + 0.001 * s for s in range(5)])
            for i in range(5)
        ]
        result = compare_all(reports, alpha=0.05)
        for i in range(5):
            assert result.matrix[i][i] is None
            for j in range(5):
                if i < j:
                    assert result.matrix[i][j] == 0.0
                elif i > j:
                    assert result.matrix[i][j] == 1.0

    def test_antisymmetric_strict_pair(self):
        a = report_with_means("a", [0.9, 0.91, 0.92])
        b = report_with_means("b", [0.1, 0.11, 0.12])
        result = compare_all([a, b])
        assert result.matrix[0][1] == 0.0
        assert result.matrix[1][0] == 1.0

    def test_stacking_across_datasets(self):
        reports = [
            report_with_means("a", [0.9, 0.91], dataset="d0"),
            report_with_means("a", [0.95, 0.96], dataset="d1"),
            report_with_means("b", [0.1, 0.11], dataset="d0"),
            report_with_means("b", [0.15, 0.16], dataset="d1"),
        ]
        result = compare_all(reports)
        assert result.scores["a"] == [0.9, 0.91, 0.95, 0.96]
        assert result.matrix[0][1] == 0.0

    def test_mismatched_counts_rejected(self):
        a = report_with_means("a", [0.9, 0.91, 0.92])
        b = report_with_means("b", [0.1, 0.11])
        with pytest.raises(ValueError, match="mismatched"):
            compare_all([a, b])

    def test_too_few_reports(self):
        with pytest.raises(ValueError, match="at least 2"):
            compare_all([report_with_means("a", [0.5])])

    def test_text_table_has_diagonal_dashes(self):
        a = report_with_means("a", [0.9, 0.91, 0.92])
        b = report_with_means("b", [0.1, 0.11, 0.12])
        table = compare_all([a, b]).to_text()
        lines = table.splitlines()
        assert lines[0].split() == ["a", "b"]
        assert lines[1].split() == ["a", "-", "0.000"]
        assert lines[2].split() == ["b", "1.000", "-"]
