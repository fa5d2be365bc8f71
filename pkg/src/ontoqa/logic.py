"""Restricted first-order fragment: ground literals, universal implications,
the Ax/Hop proof calculus and a brute-force forward-chaining closure.

Canonical text forms::

    cat(fae)
    ~herbivorous(fae)
    all x (cat(x) -> carnivore(x))
    all x (carnivore(x) -> ~herbivorous(x))
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

SYMBOL_RE = re.compile(r"[a-z][a-z0-9_]*\Z")

AX = "Ax"
HOP = "Hop"


class LogicError(ValueError):
    """Raised when a formula or proof falls outside the fragment."""


class InapplicableRule(LogicError):
    pass


def _check_symbol(name: str, what: str) -> None:
    if not isinstance(name, str) or not SYMBOL_RE.match(name):
        raise LogicError(f"invalid {what} symbol: {name!r}")


@dataclass(frozen=True, order=True)
class PredicateLiteral:
    predicate: str
    negated: bool = False

    def __post_init__(self):
        _check_symbol(self.predicate, "predicate")

    def negate(self) -> PredicateLiteral:
        return PredicateLiteral(self.predicate, not self.negated)

    def to_text(self, var: str = "x") -> str:
        return f"{'~' if self.negated else ''}{self.predicate}({var})"


@dataclass(frozen=True, order=True)
class GroundLiteral:
    literal: PredicateLiteral
    subject: str

    def __post_init__(self):
        _check_symbol(self.subject, "constant")

    @property
    def predicate(self) -> str:
        return self.literal.predicate

    @property
    def negated(self) -> bool:
        return self.literal.negated

    def negate(self) -> GroundLiteral:
        return GroundLiteral(self.literal.negate(), self.subject)

    def to_text(self) -> str:
        return self.literal.to_text(self.subject)

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True, order=True)
class UniversalImplication:
    antecedent: PredicateLiteral
    consequent: PredicateLiteral

    def __post_init__(self):
        if self.antecedent.negated:
            raise LogicError("implication antecedents must be positive")

    def to_text(self) -> str:
        return f"all x ({self.antecedent.to_text()} -> {self.consequent.to_text()})"

    def __str__(self) -> str:
        return self.to_text()


LogicalForm = Union[GroundLiteral, UniversalImplication]


def lit(predicate: str, negated: bool = False) -> PredicateLiteral:
    return PredicateLiteral(predicate, negated)


def ground(predicate: str, subject: str, negated: bool = False) -> GroundLiteral:
    return GroundLiteral(PredicateLiteral(predicate, negated), subject)


def rule(antecedent: str, consequent: str, negated: bool = False) -> UniversalImplication:
    return UniversalImplication(PredicateLiteral(antecedent), PredicateLiteral(consequent, negated))


def substitute(literal: PredicateLiteral, subject: str) -> GroundLiteral:
    """Instantiate the bound variable of ``literal`` with ``subject``."""
    return GroundLiteral(literal, subject)


def apply_hop(implication: UniversalImplication, fact: GroundLiteral) -> GroundLiteral:
    if fact.literal != implication.antecedent:
        raise InapplicableRule(f"inapplicable rule: {implication} to {fact}")
    return substitute(implication.consequent, fact.subject)


def forward_closure(axioms: Iterable[LogicalForm]) -> set[GroundLiteral]:
    """Least set of ground literals containing the ground axioms and closed
    under Hop with the quantified axioms."""
    facts: set[GroundLiteral] = set()
    by_antecedent: dict[PredicateLiteral, list[UniversalImplication]] = {}
    for form in axioms:
        if isinstance(form, GroundLiteral):
            facts.add(form)
        else:
            by_antecedent.setdefault(form.antecedent, []).append(form)
    frontier = list(facts)
    while frontier:
        fact = frontier.pop()
        for implication in by_antecedent.get(fact.literal, ()):
            derived = apply_hop(implication, fact)
            if derived not in facts:
                facts.add(derived)
                frontier.append(derived)
    return facts


# -- canonical text ---------------------------------------------------------

_LIT = r"(~?)([a-z][a-z0-9_]*)\((\w+)\)"
_GROUND_RE = re.compile(_LIT + r"\Z")
_RULE_RE = re.compile(r"all x \(" + _LIT + r" -> " + _LIT + r"\)\Z")


def parse_form(text: str) -> LogicalForm:
    """Inverse of ``form.to_text()``."""
    m = _GROUND_RE.match(text)
    if m:
        neg, pred, subj = m.groups()
        if subj == "x":
            raise LogicError(f"free variable in ground literal: {text!r}")
        return ground(pred, subj, bool(neg))
    m = _RULE_RE.match(text)
    if m:
        neg_a, pred_a, var_a, neg_c, pred_c, var_c = m.groups()
        if var_a != "x" or var_c != "x":
            raise LogicError(f"unbound variable in {text!r}")
        if neg_a:
            raise LogicError("implication antecedents must be positive")
        return rule(pred_a, pred_c, bool(neg_c))
    raise LogicError(f"not a canonical logical form: {text!r}")


# -- proofs -----------------------------------------------------------------

@dataclass(frozen=True)
class ProofStep:
    rule: str
    premises: tuple[LogicalForm, ...]
    conclusion: LogicalForm

    def __post_init__(self):
        object.__setattr__(self, "premises", tuple(self.premises))
        if self.rule == AX:
            if self.premises:
                raise LogicError("Ax steps take no premises")
        elif self.rule == HOP:
            if len(self.premises) != 2:
                raise LogicError("Hop steps take exactly two premises")
            fact, implication = self.premises
            if not isinstance(fact, GroundLiteral) or not isinstance(implication, UniversalImplication):
                raise LogicError("Hop premises are (ground literal, implication)")
            if apply_hop(implication, fact) != self.conclusion:
                raise LogicError(f"Hop conclusion does not follow: {self.conclusion}")
        else:
            raise LogicError(f"unknown rule {self.rule!r}")

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "premises": [p.to_text() for p in self.premises],
            "conclusion": self.conclusion.to_text(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ProofStep:
        return cls(
            data["rule"],
            tuple(parse_form(p) for p in data["premises"]),
            parse_form(data["conclusion"]),
        )


@dataclass(frozen=True)
class Proof:
    steps: tuple[ProofStep, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        seen: set[LogicalForm] = set()
        for step in self.steps:
            missing = [p for p in step.premises if p not in seen]
            if missing:
                raise LogicError(f"premise used before it is proved: {missing[0]}")
            seen.add(step.conclusion)

    @property
    def goal(self) -> LogicalForm:
        if not self.steps:
            raise LogicError("empty proof has no goal")
        return self.steps[-1].conclusion

    @property
    def conclusions(self) -> list[LogicalForm]:
        return [s.conclusion for s in self.steps]

    @property
    def axioms(self) -> list[LogicalForm]:
        return [s.conclusion for s in self.steps if s.rule == AX]

    @property
    def num_hops(self) -> int:
        return sum(1 for s in self.steps if s.rule == HOP)

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.steps]

    @classmethod
    def from_list(cls, data: list[dict]) -> Proof:
        return cls(tuple(ProofStep.from_dict(d) for d in data))
