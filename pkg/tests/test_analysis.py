import csv
import io
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontoqa.analysis import (
    OVERFLOW,
    AnalysisError,
    ExperimentReport,
    ReportAccumulator,
    aggregate,
    correlate,
    correlation_csv,
    first_error,
    histogram_csv,
    recovery_lengths,
    scatter_csv,
    summary_csv,
)
from ontoqa.dataset import ExampleConfig, build_examples
from ontoqa.evaluator import METRICS, EvaluationResult, StepClassification as SC, evaluate_cot
from ontoqa.perturb import gold_completion

CELL = {"flavor": "fictional", "hops": 1, "ordering": "bottom_up", "model": "test"}


def pearson_oracle(xs, ys):
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxy = sum(x * y for x, y in zip(xs, ys))
    sxx, syy = sum(x * x for x in xs), sum(y * y for y in ys)
    return (n * sxy - sx * sy) / math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))


def fake_report(label, proof):
    return ExperimentReport(
        CELL, 10, 0, label, (0, 1), {m: proof for m in METRICS}, {m: (0, 1) for m in METRICS}, {}, {}, {}
    )


@pytest.fixture(scope="module")
def fixture_results(cat_example, analytics_fixture):
    return [evaluate_cot(cat_example, c["text"]) for c in analytics_fixture["completions"]]


class TestFirstError:
    def test_fixture_cases(self, cat_example, analytics_fixture):
        for case in analytics_fixture["completions"]:
            err = first_error(evaluate_cot(cat_example, case["text"]))
            assert (err.value if err else None) == case["first_error"], case["name"]

    def test_skips_restatements(self, cat_example):
        text = "Fae is a cat. Fae is a cat. " + " ".join(cat_example.chain_of_thought[1:])
        assert first_error(evaluate_cot(cat_example, text)) is None


class TestRecovery:
    def test_per_completion(self, cat_example, analytics_fixture):
        for case in analytics_fixture["completions"]:
            hist = recovery_lengths([evaluate_cot(cat_example, case["text"])])
            assert {str(k): v for k, v in hist.items()} == case["recovery"], case["name"]

    def test_total(self, fixture_results, analytics_fixture):
        hist = recovery_lengths(fixture_results)
        assert {str(k): v for k, v in hist.items()} == analytics_fixture["recovery_total"]

    def test_gold_contributes_nothing(self, cat_example):
        assert not recovery_lengths([evaluate_cot(cat_example, gold_completion(cat_example))])


class TestAggregate:
    def test_fixture_first_errors(self, fixture_results, analytics_fixture):
        report = aggregate(fixture_results, CELL)
        expected = analytics_fixture["first_errors_over_incorrect_valid"]
        assert {k: v for k, v in report.first_errors.items() if v} == expected
        n_incorrect = sum(1 for c in analytics_fixture["completions"] if not c["valid"])
        assert report.proof_accuracy["valid"] == pytest.approx(1 - n_incorrect / len(fixture_results))

    def test_first_error_invariant(self, fixture_results):
        for metric in METRICS:
            report = aggregate(fixture_results, CELL, metric)
            incorrect_with_error = sum(
                1 for r in fixture_results if not r.verdicts[metric] and first_error(r) is not None
            )
            assert sum(report.first_errors.values()) == incorrect_with_error

    def test_step_counts_sum(self, fixture_results):
        report = aggregate(fixture_results, CELL)
        assert sum(report.step_counts.values()) == sum(len(r.steps) for r in fixture_results)
        assert report.total_steps == sum(report.step_counts.values())
        assert set(report.step_counts) == {c.value for c in SC}

    def test_gold_self_evaluation(self):
        examples = build_examples(ExampleConfig("fictional", 3), 0, 400)
        report = aggregate([evaluate_cot(e, gold_completion(e)) for e in examples], CELL)
        assert report.n == 400 and report.label_accuracy == 1.0
        assert all(report.proof_accuracy[m] == 1.0 for m in METRICS)
        assert report.step_counts["canonical"] == report.total_steps

    def test_skipped_are_excluded(self, cat_example):
        results = [evaluate_cot(cat_example, gold_completion(cat_example)) for _ in range(396)]
        results += [EvaluationResult.skipped_result(str(i)) for i in range(4)]
        report = aggregate(results, CELL)
        assert (report.n, report.n_skipped) == (396, 4)
        assert report.label_accuracy == 1.0

    def test_empty(self):
        with pytest.raises(AnalysisError):
            aggregate([], CELL)

    def test_all_skipped(self):
        with pytest.raises(AnalysisError):
            aggregate([EvaluationResult.skipped_result()], CELL)

    @settings(max_examples=25, deadline=None)
    @given(st.randoms(use_true_random=False))
    def test_permutation_invariant(self, fixture_results, rnd):
        shuffled = list(fixture_results)
        rnd.shuffle(shuffled)
        assert aggregate(shuffled, CELL).to_dict() == aggregate(fixture_results, CELL).to_dict()

    def test_merge_associative(self, fixture_results):
        parts = [ReportAccumulator() for _ in range(3)]
        for i, r in enumerate(fixture_results):
            parts[i % 3].add(r)
        left = parts[0].merge(parts[1]).merge(parts[2])
        right = parts[0].merge(parts[1].merge(parts[2]))
        whole = aggregate(fixture_results, CELL)
        assert left.report(CELL).to_dict() == right.report(CELL).to_dict() == whole.to_dict()

    def test_report_round_trip(self, fixture_results):
        report = aggregate(fixture_results, CELL)
        assert ExperimentReport.from_dict(report.to_dict()).to_dict() == report.to_dict()


class TestCorrelate:
    def test_needs_two(self):
        with pytest.raises(AnalysisError):
            correlate([fake_report(0.5, 0.5)])

    def test_identical_points_undefined(self):
        corr = correlate([fake_report(0.5, 0.5)] * 3)
        assert all(c.r is None for c in corr.values())

    def test_identity_line(self):
        corr = correlate([fake_report(a, a) for a in (0.2, 0.5, 0.9)])
        for c in corr.values():
            assert all(x == y for x, y in c.points)
            assert c.r == pytest.approx(1.0)

    def test_matches_closed_form(self):
        rng = random.Random(4)
        for _ in range(50):
            pts = [(rng.random(), rng.random()) for _ in range(rng.randint(2, 30))]
            corr = correlate([fake_report(x, y) for x, y in pts], metrics=["valid"])
            assert corr["valid"].r == pytest.approx(pearson_oracle(*zip(*pts)), abs=1e-9)


class TestCsv:
    def test_scatter_and_correlation(self):
        reports = [fake_report(0.2, 0.1), fake_report(0.8, 0.9)]
        rows = list(csv.reader(io.StringIO(scatter_csv(reports))))
        assert rows[0] == ["cell", "n", "label_accuracy", *METRICS]
        assert len(rows) == 3
        rows = list(csv.reader(io.StringIO(correlation_csv(correlate(reports)))))
        assert [r[0] for r in rows[1:]] == list(METRICS)

    def test_histogram_order(self):
        assert histogram_csv({OVERFLOW: 4, 2: 1, 1: 2}) == "bucket,count\n1,2\n2,1\nnever,4\n"

    def test_summary_has_interval_columns(self, fixture_results):
        text = summary_csv([aggregate(fixture_results, CELL)])
        head = text.splitlines()[0].split(",")
        assert "valid_low" in head and "label_high" in head
