"""Aggregate evaluation results into per-cell reports and cross-cell correlations."""

from __future__ import annotations

import csv
import io
import json
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .evaluator import METRICS, EvaluationResult, StepClassification, wilson_interval

OVERFLOW = "never"
CATEGORIES = tuple(c.value for c in StepClassification)


class AnalysisError(ValueError):
    pass


def first_error(result: EvaluationResult) -> Optional[StepClassification]:
    """Class of the earliest step that is neither canonical nor a restatement."""
    for step in result.steps:
        if step.classification is StepClassification.CANONICAL or step.restatement:
            continue
        return step.classification
    return None


def recovery_lengths(results: Iterable[EvaluationResult]) -> Counter:
    """Steps from each strict-atomic misleading step to the next gold step.

    Keys are positive ints, or ``OVERFLOW`` when no later step is in the
    gold proof.
    """
    hist: Counter = Counter()
    for result in results:
        steps = result.steps
        for i, step in enumerate(steps):
            if step.classification is not StepClassification.STRICT_ATOMIC_MISLEADING:
                continue
            j = next((j for j in range(i + 1, len(steps)) if steps[j].in_gold), None)
            hist[OVERFLOW if j is None else j - i] += 1
    return hist


@dataclass
class ExperimentReport:
    cell: dict
    n: int
    n_skipped: int
    label_accuracy: float
    label_interval: tuple[float, float]
    proof_accuracy: dict
    proof_interval: dict
    step_counts: dict
    first_errors: dict
    recovery: dict
    first_error_metric: str = "valid"
    total_steps: int = 0

    def to_dict(self) -> dict:
        return {
            "cell": self.cell,
            "n": self.n,
            "n_skipped": self.n_skipped,
            "label_accuracy": self.label_accuracy,
            "label_interval": list(self.label_interval),
            "proof_accuracy": {m: self.proof_accuracy[m] for m in METRICS},
            "proof_interval": {m: list(self.proof_interval[m]) for m in METRICS},
            "step_counts": {c: self.step_counts.get(c, 0) for c in CATEGORIES},
            "total_steps": self.total_steps,
            "first_error_metric": self.first_error_metric,
            "first_errors": {c: self.first_errors.get(c, 0) for c in CATEGORIES},
            "recovery": {str(k): v for k, v in _sorted_buckets(self.recovery)},
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentReport:
        recovery = {(k if k == OVERFLOW else int(k)): v for k, v in data["recovery"].items()}
        return cls(
            cell=dict(data["cell"]),
            n=data["n"],
            n_skipped=data["n_skipped"],
            label_accuracy=data["label_accuracy"],
            label_interval=tuple(data["label_interval"]),
            proof_accuracy=dict(data["proof_accuracy"]),
            proof_interval={m: tuple(v) for m, v in data["proof_interval"].items()},
            step_counts=dict(data["step_counts"]),
            first_errors=dict(data["first_errors"]),
            recovery=recovery,
            first_error_metric=data.get("first_error_metric", "valid"),
            total_steps=data.get("total_steps", sum(data["step_counts"].values())),
        )


def _sorted_buckets(hist) -> list:
    return sorted(hist.items(), key=lambda kv: (kv[0] == OVERFLOW, kv[0] if kv[0] != OVERFLOW else 0))


@dataclass
class ReportAccumulator:
    """Running totals for one cell. ``merge`` is associative and commutative."""

    metric: str = "valid"
    n: int = 0
    n_skipped: int = 0
    label_correct: int = 0
    proof_correct: Counter = field(default_factory=Counter)
    step_counts: Counter = field(default_factory=Counter)
    first_errors: Counter = field(default_factory=Counter)
    recovery: Counter = field(default_factory=Counter)

    def add(self, result: EvaluationResult) -> ReportAccumulator:
        if result.skipped:
            self.n_skipped += 1
            return self
        self.n += 1
        self.label_correct += result.label_correct
        for m in METRICS:
            self.proof_correct[m] += result.verdicts[m]
        self.step_counts.update(s.classification.value for s in result.steps)
        if not result.verdicts[self.metric]:
            err = first_error(result)
            if err is not None:
                self.first_errors[err.value] += 1
        self.recovery.update(recovery_lengths([result]))
        return self

    def merge(self, other: ReportAccumulator) -> ReportAccumulator:
        if other.metric != self.metric:
            raise AnalysisError("cannot merge accumulators built for different metrics")
        return ReportAccumulator(
            self.metric,
            self.n + other.n,
            self.n_skipped + other.n_skipped,
            self.label_correct + other.label_correct,
            self.proof_correct + other.proof_correct,
            self.step_counts + other.step_counts,
            self.first_errors + other.first_errors,
            self.recovery + other.recovery,
        )

    def report(self, cell: dict, confidence: float = 0.95) -> ExperimentReport:
        if self.n == 0:
            raise AnalysisError("no scorable results in this cell")
        acc = {m: self.proof_correct[m] / self.n for m in METRICS}
        return ExperimentReport(
            cell=dict(cell),
            n=self.n,
            n_skipped=self.n_skipped,
            label_accuracy=self.label_correct / self.n,
            label_interval=wilson_interval(self.label_correct, self.n, confidence),
            proof_accuracy=acc,
            proof_interval={m: wilson_interval(self.proof_correct[m], self.n, confidence) for m in METRICS},
            step_counts={c: self.step_counts.get(c, 0) for c in CATEGORIES},
            first_errors={c: self.first_errors.get(c, 0) for c in CATEGORIES},
            recovery=dict(self.recovery),
            first_error_metric=self.metric,
            total_steps=sum(self.step_counts.values()),
        )


def aggregate(results: Iterable[EvaluationResult], cell: dict, metric: str = "valid") -> ExperimentReport:
    """Fold one cell's results into a report. Skipped results count toward
    ``n_skipped`` only."""
    if metric not in METRICS:
        raise AnalysisError(f"unknown metric {metric!r}")
    acc = ReportAccumulator(metric)
    seen = False
    for r in results:
        acc.add(r)
        seen = True
    if not seen:
        raise AnalysisError("cannot aggregate an empty result set")
    return acc.report(cell)


# -- correlation ------------------------------------------------------------

@dataclass
class Correlation:
    metric: str
    points: list
    r: Optional[float]


def pearson(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """Pearson r, or None when either coordinate has zero variance."""
    if len(xs) != len(ys):
        raise AnalysisError("coordinate lists differ in length")
    if len(xs) < 2:
        raise AnalysisError("correlation needs at least two points")
    try:
        return statistics.correlation(xs, ys)
    except statistics.StatisticsError:
        return None


def correlate(reports: Sequence[ExperimentReport], metrics: Sequence[str] = METRICS) -> dict[str, Correlation]:
    if len(reports) < 2:
        raise AnalysisError("correlation needs at least two reports")
    out = {}
    for m in metrics:
        points = [(r.label_accuracy, r.proof_accuracy[m]) for r in reports]
        out[m] = Correlation(m, points, pearson([p[0] for p in points], [p[1] for p in points]))
    return out


# -- output -----------------------------------------------------------------

def cell_key(cell: dict) -> str:
    return "-".join(str(cell[k]) for k in ("flavor", "hops", "ordering") if k in cell)


def _csv_text(rows: list) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def scatter_csv(reports: Sequence[ExperimentReport]) -> str:
    rows = [["cell", "n", "label_accuracy", *METRICS]]
    for r in reports:
        rows.append([cell_key(r.cell), r.n, _fmt(r.label_accuracy), *(_fmt(r.proof_accuracy[m]) for m in METRICS)])
    return _csv_text(rows)


def correlation_csv(correlations: dict[str, Correlation]) -> str:
    rows = [["metric", "points", "pearson_r"]]
    for m, c in correlations.items():
        rows.append([m, len(c.points), "" if c.r is None else _fmt(c.r)])
    return _csv_text(rows)


def summary_csv(reports: Sequence[ExperimentReport]) -> str:
    head = ["flavor", "hops", "ordering", "model", "n", "n_skipped", "label_accuracy", "label_low", "label_high"]
    for m in METRICS:
        head += [m, f"{m}_low", f"{m}_high"]
    rows = [head]
    for r in reports:
        row = [r.cell.get("flavor"), r.cell.get("hops"), r.cell.get("ordering"), r.cell.get("model"), r.n, r.n_skipped]
        row += [_fmt(r.label_accuracy), *map(_fmt, r.label_interval)]
        for m in METRICS:
            row += [_fmt(r.proof_accuracy[m]), *map(_fmt, r.proof_interval[m])]
        rows.append(row)
    return _csv_text(rows)


def histogram_csv(hist: dict) -> str:
    return _csv_text([["bucket", "count"], *([str(k), v] for k, v in _sorted_buckets(hist))])


def _fmt(x: float) -> str:
    return repr(float(x))


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def write_json(path, data) -> None:
    write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")
