"""Proof reconstruction and step classification for predicted chains of thought.

Each predicted sentence is parsed to a logical form and checked for
provability from the context axioms plus the conclusions already accepted.
``k`` counts the deduction-rule applications the step needs beyond what the
chain of thought has already stated: an accepted conclusion costs 0, an
axiom costs 1 (its Ax step) and every Hop adds 1 plus 1 for an Ax step when
its rule was not stated yet. A step is atomic iff ``k == 1``.
"""

from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from statistics import NormalDist
from typing import Iterable, Optional

from .grammar import UnparseableSentence, parse_sentence
from .logic import GroundLiteral, LogicalForm, PredicateLiteral, UniversalImplication, parse_form, substitute

METRICS = ("strict", "skip", "broad", "valid")


class StepClassification(str, Enum):
    CANONICAL = "canonical"
    STRICT_ATOMIC_MISLEADING = "strict_atomic_misleading"
    STRICT_NONATOMIC_CORRECT = "strict_nonatomic_correct"
    STRICT_NONATOMIC_MISLEADING = "strict_nonatomic_misleading"
    BROAD_CORRECT = "broad_correct"
    BROAD_MISLEADING = "broad_misleading"
    INVALID = "invalid"
    UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class ProvabilityResult:
    premises: frozenset = frozenset()
    k: int = -1
    via_graph: bool = False

    @property
    def provable(self) -> bool:
        return self.k >= 0


NOT_PROVABLE = ProvabilityResult()


class ImplicationGraph:
    """Directed graph over predicate literals with one edge per quantified axiom."""

    def __init__(self, axioms: Iterable[LogicalForm]):
        self.edges: dict[PredicateLiteral, list[tuple[PredicateLiteral, UniversalImplication]]] = {}
        for a in sorted({a for a in axioms if isinstance(a, UniversalImplication)}, key=str):
            self.edges.setdefault(a.antecedent, []).append((a.consequent, a))

    def shortest_path(self, source: PredicateLiteral, target: PredicateLiteral) -> Optional[list[UniversalImplication]]:
        """Axioms along a shortest non-empty path, or ``None``."""
        parents: dict[PredicateLiteral, tuple[PredicateLiteral, UniversalImplication]] = {}
        queue = deque([source])
        seen = {source}
        while queue:
            node = queue.popleft()
            for nxt, axiom in self.edges.get(node, ()):
                if nxt in seen:
                    continue
                parents[nxt] = (node, axiom)
                if nxt == target:
                    path = []
                    while nxt != source:
                        nxt, edge = parents[nxt]
                        path.append(edge)
                    return path[::-1]
                seen.add(nxt)
                queue.append(nxt)
        return None


class Prover:
    """Provability checks against one fixed axiom set."""

    def __init__(self, axioms: Iterable[LogicalForm]):
        self.axioms = frozenset(axioms)
        self.graph = ImplicationGraph(self.axioms)
        self._rules: dict[PredicateLiteral, list[UniversalImplication]] = {}
        for a in sorted((a for a in self.axioms if isinstance(a, UniversalImplication)), key=str):
            self._rules.setdefault(a.consequent, []).append(a)

    def is_provable(self, form: LogicalForm, previous: Iterable[LogicalForm] = ()) -> ProvabilityResult:
        previous = previous if isinstance(previous, (set, frozenset)) else set(previous)
        return self._prove(form, previous, frozenset())

    def _prove(self, form, previous, visiting) -> ProvabilityResult:
        if form in previous:
            return ProvabilityResult(frozenset({form}), 0)
        if form in self.axioms:
            return ProvabilityResult(frozenset({form}), 1)
        if isinstance(form, GroundLiteral):
            if form in visiting:
                return NOT_PROVABLE
            stated = sorted(
                (a for a in previous if isinstance(a, UniversalImplication) and a.consequent == form.literal),
                key=str,
            )
            candidates = stated + [a for a in self._rules.get(form.literal, ()) if a not in previous]
            best = NOT_PROVABLE
            for rule in candidates:
                sub = self._prove(substitute(rule.antecedent, form.subject), previous, visiting | {form})
                if not sub.provable:
                    continue
                cost = sub.k + 1 + (0 if rule in previous else 1)
                if not best.provable or cost < best.k:
                    best = ProvabilityResult(sub.premises | {rule}, cost)
            return best
        path = self.graph.shortest_path(form.antecedent, form.consequent)
        if path:
            return ProvabilityResult(frozenset(path), len(path), via_graph=True)
        return NOT_PROVABLE


def is_provable(form: LogicalForm, axioms: Iterable[LogicalForm], previous: Iterable[LogicalForm] = ()) -> ProvabilityResult:
    return Prover(axioms).is_provable(form, previous)


def is_misleading(result: ProvabilityResult, conclusion: LogicalForm, gold: frozenset) -> bool:
    """The step leaves the gold proof: its conclusion is not a gold conclusion
    and its derivation needs something outside the gold proof."""
    return result.provable and conclusion not in gold and not result.premises <= gold


def classify_step(result: ProvabilityResult, conclusion: LogicalForm, gold: Iterable[LogicalForm]) -> StepClassification:
    gold = gold if isinstance(gold, frozenset) else frozenset(gold)
    if not result.provable:
        return StepClassification.INVALID
    misleading = is_misleading(result, conclusion, gold)
    if result.via_graph:
        return StepClassification.BROAD_MISLEADING if misleading else StepClassification.BROAD_CORRECT
    if result.k == 1:
        return StepClassification.STRICT_ATOMIC_MISLEADING if misleading else StepClassification.CANONICAL
    return StepClassification.STRICT_NONATOMIC_MISLEADING if misleading else StepClassification.STRICT_NONATOMIC_CORRECT


def _admits(metric: str, result: ProvabilityResult) -> bool:
    if result.k == 0:
        return True
    if metric == "strict":
        return result.k == 1 and not result.via_graph
    if metric == "skip":
        return result.k >= 1 and not result.via_graph
    if metric == "broad":
        return result.k == 1 or result.via_graph
    if metric == "valid":
        return result.k >= 1
    raise ValueError(f"unknown metric {metric!r}")


# -- completions ------------------------------------------------------------

_LABEL_RE = re.compile(r"(?:^|\s)(true|false)[\s.!]*\Z", re.IGNORECASE)
_SENTENCE_SPLIT = re.compile(r"(?<=\.)\s+")


def split_completion(text: str) -> tuple[list[str], Optional[str]]:
    """Split a raw completion into sentences and the trailing label token."""
    text = text or ""
    for stop in ("\n\n", "\nQ:"):
        if stop in text:
            text = text.split(stop, 1)[0]
    text = text.strip()
    label = None
    m = _LABEL_RE.search(text)
    if m:
        label = m.group(1).capitalize()
        text = text[: m.start()].strip()
    sentences = [s.strip() for s in _SENTENCE_SPLIT.split(text) if s.strip()]
    return sentences, label


@dataclass
class StepResult:
    sentence: str
    form: Optional[LogicalForm]
    result: ProvabilityResult
    classification: StepClassification
    misleading: bool = False
    in_gold: bool = False

    @property
    def restatement(self) -> bool:
        return self.result.k == 0

    def to_dict(self) -> dict:
        return {
            "sentence": self.sentence,
            "form": self.form.to_text() if self.form is not None else None,
            "k": self.result.k,
            "via_graph": self.result.via_graph,
            "premises": sorted(p.to_text() for p in self.result.premises),
            "classification": self.classification.value,
            "misleading": self.misleading,
            "in_gold": self.in_gold,
        }

    @classmethod
    def from_dict(cls, data: dict) -> StepResult:
        form = parse_form(data["form"]) if data.get("form") else None
        result = ProvabilityResult(
            frozenset(parse_form(p) for p in data.get("premises", [])), data["k"], data.get("via_graph", False)
        )
        return cls(
            data["sentence"],
            form,
            result,
            StepClassification(data["classification"]),
            data.get("misleading", False),
            data.get("in_gold", False),
        )


@dataclass
class EvaluationResult:
    steps: list = field(default_factory=list)
    predicted_label: Optional[str] = None
    gold_label: Optional[str] = None
    label_correct: bool = False
    label_missing: bool = True
    verdicts: dict = field(default_factory=lambda: {m: False for m in METRICS})
    gold_subset: bool = False
    ordering_violation: bool = False
    completion: str = ""
    example_id: Optional[str] = None
    skipped: bool = False

    @classmethod
    def skipped_result(cls, example_id: Optional[str] = None, gold_label: Optional[str] = None) -> EvaluationResult:
        return cls(example_id=example_id, gold_label=gold_label, skipped=True)

    @property
    def classifications(self) -> list[StepClassification]:
        return [s.classification for s in self.steps]

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "skipped": self.skipped,
            "completion": self.completion,
            "predicted_label": self.predicted_label,
            "gold_label": self.gold_label,
            "label_correct": self.label_correct,
            "label_missing": self.label_missing,
            "verdicts": {m: self.verdicts[m] for m in METRICS},
            "gold_subset": self.gold_subset,
            "ordering_violation": self.ordering_violation,
            "steps": [s.to_dict() for s in self.steps],
        }

    @classmethod
    def from_dict(cls, data: dict) -> EvaluationResult:
        return cls(
            steps=[StepResult.from_dict(s) for s in data.get("steps", [])],
            predicted_label=data.get("predicted_label"),
            gold_label=data.get("gold_label"),
            label_correct=data.get("label_correct", False),
            label_missing=data.get("label_missing", True),
            verdicts={m: bool(data.get("verdicts", {}).get(m, False)) for m in METRICS},
            gold_subset=data.get("gold_subset", False),
            ordering_violation=data.get("ordering_violation", False),
            completion=data.get("completion", ""),
            example_id=data.get("example_id"),
            skipped=data.get("skipped", False),
        )


def _ordering_violation(forms: list, proof) -> bool:
    """True if some gold Hop conclusion is stated before one of its premises."""
    first: dict = {}
    for i, f in enumerate(forms):
        if f is not None:
            first.setdefault(f, i)
    for step in proof.steps:
        if not step.premises or step.conclusion not in first:
            continue
        if any(p in first and first[p] > first[step.conclusion] for p in step.premises):
            return True
    return False


def evaluate_cot(example, predicted_text: str, prover: Optional[Prover] = None) -> EvaluationResult:
    """Reconstruct and score the proof in ``predicted_text`` against ``example``.

    ``example`` needs ``axioms``, ``gold_proof``, ``lexicon`` and ``label``.
    Per-step classifications are taken against the most permissive (valid)
    admission set; each metric keeps its own set of accepted conclusions.
    """
    proof = example.gold_proof
    if prover is None:
        prover = Prover(list(example.axioms) + [proof.steps[0].conclusion])
    gold = frozenset(proof.conclusions)
    goal = proof.goal

    sentences, label = split_completion(predicted_text)
    forms: list[Optional[LogicalForm]] = []
    for sentence in sentences:
        try:
            forms.append(parse_sentence(sentence, example.lexicon))
        except UnparseableSentence:
            forms.append(None)

    accepted = {m: set() for m in METRICS}
    steps = []
    for sentence, form in zip(sentences, forms):
        if form is None:
            steps.append(StepResult(sentence, None, NOT_PROVABLE, StepClassification.UNPARSEABLE))
            continue
        for metric in METRICS:
            if metric == "valid":
                continue
            r = prover.is_provable(form, accepted[metric])
            if _admits(metric, r):
                accepted[metric].add(form)
        result = prover.is_provable(form, accepted["valid"])
        if _admits("valid", result):
            accepted["valid"].add(form)
        steps.append(
            StepResult(
                sentence,
                form,
                result,
                classify_step(result, form, gold),
                is_misleading(result, form, gold),
                form in gold,
            )
        )

    violation = _ordering_violation(forms, proof)
    verdicts = {m: goal in accepted[m] and not violation for m in METRICS}
    return EvaluationResult(
        steps=steps,
        predicted_label=label,
        gold_label=example.label,
        label_correct=label is not None and label == example.label,
        label_missing=label is None,
        verdicts=verdicts,
        gold_subset=gold <= set(f for f in forms if f is not None),
        ordering_violation=violation,
        completion=predicted_text,
        example_id=getattr(example, "example_id", None),
    )


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == trials else min(1.0, center + half)
    return low, high
