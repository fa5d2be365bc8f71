"""Template grammar between logical forms and English sentences.

Every sentence the renderer can produce is parsed back to the form it came
from. Parsing is token-level matching against the fixed template inventory;
any word not in the lexicon makes the sentence unparseable.

Template inventory (``X`` antecedent concept, ``Y`` consequent noun or
adjective, ``not`` optional)::

    each    Each X is [not] [a] Y.
    every   Every X is [not] [a] Y.
    all     All Xs are [not] Ys.
    bare    Xs are [not] Ys.
    ground  Name is [not] [a] Y.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .logic import GroundLiteral, LogicalForm, PredicateLiteral, UniversalImplication

UNIVERSAL_TEMPLATES = ("each", "every", "all", "bare")
GROUND_TEMPLATE = "ground"
TEMPLATES = UNIVERSAL_TEMPLATES + (GROUND_TEMPLATE,)

FUNCTION_WORDS = frozenset(
    {"each", "every", "all", "is", "are", "not", "a", "an", "true", "false", "or"}
)

TOP_DOWN = "top_down"
BOTTOM_UP = "bottom_up"
ORDERINGS = (TOP_DOWN, BOTTOM_UP)


class GrammarError(ValueError):
    pass


class RenderError(GrammarError):
    pass


class UnparseableSentence(GrammarError):
    """The sentence matches no template; ``text`` keeps the raw input."""

    def __init__(self, text: str, reason: str = "no template matches"):
        super().__init__(f"unparseable sentence ({reason}): {text!r}")
        self.text = text
        self.reason = reason


_IRREGULAR_PLURALS = {
    "person": "people",
    "wolf": "wolves",
    "leaf": "leaves",
    "mouse": "mice",
    "goose": "geese",
}


def pluralize(noun: str) -> str:
    if noun in _IRREGULAR_PLURALS:
        return _IRREGULAR_PLURALS[noun]
    if noun.endswith(("s", "x", "z", "ch", "sh")):
        return noun + "es"
    if noun.endswith("y") and len(noun) > 1 and noun[-2] not in "aeiou":
        return noun[:-1] + "ies"
    return noun + "s"


def article(word: str) -> str:
    return "an" if word[0] in "aeiou" else "a"


@dataclass(frozen=True)
class Lexicon:
    """Surface forms for every symbol in use.

    ``concepts`` maps a concept symbol to ``(singular, plural)``,
    ``properties`` maps a property symbol to its adjective and ``entities``
    maps a constant to its proper name.
    """

    concepts: dict = field(default_factory=dict)
    properties: dict = field(default_factory=dict)
    entities: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "concepts", {k: tuple(v) for k, v in self.concepts.items()})
        seen: dict[str, str] = {}

        def claim(surface: str, owner: str):
            key = surface.lower()
            if " " in key or not key:
                raise GrammarError(f"surface form must be a single token: {surface!r}")
            if key in FUNCTION_WORDS:
                raise GrammarError(f"surface form collides with a function word: {surface!r}")
            if key in seen and seen[key] != owner:
                raise GrammarError(f"surface form {surface!r} used by {seen[key]} and {owner}")
            seen[key] = owner

        overlap = set(self.concepts) & set(self.properties) | set(self.entities) & (
            set(self.concepts) | set(self.properties)
        )
        if overlap:
            raise GrammarError(f"symbols with more than one entry: {sorted(overlap)}")
        for sym, (sing, plur) in self.concepts.items():
            claim(sing, f"concept {sym}")
            claim(plur, f"concept {sym}")
        for sym, adj in self.properties.items():
            claim(adj, f"property {sym}")
        for sym, name in self.entities.items():
            claim(name, f"entity {sym}")
        # surface -> (kind, symbol)
        index = {}
        for sym, (sing, plur) in self.concepts.items():
            index[sing.lower()] = ("singular", sym)
            index[plur.lower()] = ("plural", sym)
        for sym, adj in self.properties.items():
            index[adj.lower()] = ("adjective", sym)
        for sym, name in self.entities.items():
            index[name.lower()] = ("entity", sym)
        object.__setattr__(self, "_index", index)

    @classmethod
    def build(
        cls,
        concepts: Iterable[str] = (),
        properties: Iterable[str] = (),
        entities: Iterable[str] = (),
        plurals: Optional[dict] = None,
    ) -> Lexicon:
        plurals = plurals or {}
        return cls(
            concepts={c: (c, plurals.get(c) or pluralize(c)) for c in concepts},
            properties={p: p.replace("_", "-") for p in properties},
            entities={e: e.capitalize() for e in entities},
        )

    def merge(self, other: Lexicon) -> Lexicon:
        return Lexicon(
            {**self.concepts, **other.concepts},
            {**self.properties, **other.properties},
            {**self.entities, **other.entities},
        )

    def restrict(self, symbols: Iterable[str]) -> Lexicon:
        wanted = set(symbols)
        return Lexicon(
            {k: v for k, v in self.concepts.items() if k in wanted},
            {k: v for k, v in self.properties.items() if k in wanted},
            {k: v for k, v in self.entities.items() if k in wanted},
        )

    def lookup(self, token: str) -> Optional[tuple[str, str]]:
        return self._index.get(token.lower())

    def is_noun(self, symbol: str) -> bool:
        return symbol in self.concepts

    def to_dict(self) -> dict:
        return {
            "concepts": {k: list(v) for k, v in sorted(self.concepts.items())},
            "properties": dict(sorted(self.properties.items())),
            "entities": dict(sorted(self.entities.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Lexicon:
        return cls(data.get("concepts", {}), data.get("properties", {}), data.get("entities", {}))


# -- rendering --------------------------------------------------------------

def _capitalize(sentence: str) -> str:
    return sentence[0].upper() + sentence[1:]


def _predicate_phrase(literal: PredicateLiteral, lexicon: Lexicon, plural: bool) -> str:
    sym = literal.predicate
    neg = "not " if literal.negated else ""
    if sym in lexicon.concepts:
        sing, plur = lexicon.concepts[sym]
        if plural:
            return neg + plur
        return f"{neg}{article(sing)} {sing}"
    if sym in lexicon.properties:
        return neg + lexicon.properties[sym]
    raise RenderError(f"no lexicon entry for {sym!r}")


def applicable_templates(form: LogicalForm) -> tuple[str, ...]:
    if isinstance(form, GroundLiteral):
        return (GROUND_TEMPLATE,)
    return UNIVERSAL_TEMPLATES


def render_form(
    form: LogicalForm,
    lexicon: Lexicon,
    rng: Optional[random.Random] = None,
    template: Optional[str] = None,
) -> str:
    """Render ``form`` with ``template``, or a uniformly chosen applicable one.

    Without ``rng`` or ``template`` the first applicable template is used.
    """
    choices = applicable_templates(form)
    if template is None:
        template = rng.choice(choices) if rng is not None else choices[0]
    elif template not in choices:
        raise RenderError(f"template {template!r} does not apply to {form}")

    if isinstance(form, GroundLiteral):
        if form.subject not in lexicon.entities:
            raise RenderError(f"no lexicon entry for entity {form.subject!r}")
        name = lexicon.entities[form.subject]
        return f"{name} is {_predicate_phrase(form.literal, lexicon, plural=False)}."

    ante = form.antecedent.predicate
    if ante not in lexicon.concepts:
        raise RenderError(f"antecedent {ante!r} is not a concept in the lexicon")
    sing, plur = lexicon.concepts[ante]
    if template in ("each", "every"):
        body = f"{template} {sing} is {_predicate_phrase(form.consequent, lexicon, plural=False)}"
    else:
        body = f"{plur} are {_predicate_phrase(form.consequent, lexicon, plural=True)}"
        if template == "all":
            body = "all " + body
    return _capitalize(body) + "."


# -- parsing ----------------------------------------------------------------

def _tokens(sentence: str) -> list[str]:
    text = sentence.strip().rstrip(".!?").strip()
    return text.lower().split()


def _consequent(tokens: list[str], lexicon: Lexicon, want_plural: bool, raw: str) -> PredicateLiteral:
    negated = False
    if tokens and tokens[0] == "not":
        negated = True
        tokens = tokens[1:]
    if not want_plural and tokens and tokens[0] in ("a", "an"):
        tokens = tokens[1:]
    if len(tokens) != 1:
        raise UnparseableSentence(raw)
    entry = lexicon.lookup(tokens[0])
    if entry is None:
        raise UnparseableSentence(raw, f"unknown word {tokens[0]!r}")
    kind, sym = entry
    if kind == "adjective" or kind == ("plural" if want_plural else "singular"):
        return PredicateLiteral(sym, negated)
    raise UnparseableSentence(raw, f"{tokens[0]!r} is not a {'plural' if want_plural else 'singular'} form")


def _concept(token: str, lexicon: Lexicon, kind: str, raw: str) -> str:
    entry = lexicon.lookup(token)
    if entry is None:
        raise UnparseableSentence(raw, f"unknown word {token!r}")
    if entry[0] != kind:
        raise UnparseableSentence(raw, f"{token!r} is not a {kind} concept")
    return entry[1]


def parse_sentence(sentence: str, lexicon: Lexicon) -> LogicalForm:
    """Parse one templated sentence; raises :class:`UnparseableSentence`."""
    toks = _tokens(sentence)
    if len(toks) < 3:
        raise UnparseableSentence(sentence)
    head = toks[0]
    if head in ("each", "every"):
        if len(toks) < 4 or toks[2] != "is":
            raise UnparseableSentence(sentence)
        ante = _concept(toks[1], lexicon, "singular", sentence)
        return UniversalImplication(PredicateLiteral(ante), _consequent(toks[3:], lexicon, False, sentence))
    if head == "all":
        toks = toks[1:]
        if len(toks) < 3:
            raise UnparseableSentence(sentence)
    if toks[1] == "are":
        ante = _concept(toks[0], lexicon, "plural", sentence)
        return UniversalImplication(PredicateLiteral(ante), _consequent(toks[2:], lexicon, True, sentence))
    if toks[1] == "is" and head != "all":
        subject = _concept(toks[0], lexicon, "entity", sentence)
        return GroundLiteral(_consequent(toks[2:], lexicon, False, sentence), subject)
    raise UnparseableSentence(sentence)


def render_query(form: GroundLiteral, lexicon: Lexicon) -> str:
    return "True or false: " + render_form(form, lexicon)


def parse_query(text: str, lexicon: Lexicon) -> GroundLiteral:
    prefix = "true or false:"
    stripped = text.strip()
    if not stripped.lower().startswith(prefix):
        raise UnparseableSentence(text, "missing 'True or false:' prefix")
    form = parse_sentence(stripped[len(prefix):], lexicon)
    if not isinstance(form, GroundLiteral):
        raise UnparseableSentence(text, "query must be about an entity")
    return form


def render_sentences(
    forms: Sequence[LogicalForm],
    lexicon: Lexicon,
    rng: Optional[random.Random] = None,
    templates: Optional[Sequence[Optional[str]]] = None,
) -> list[str]:
    if templates is None:
        templates = [None] * len(forms)
    if len(templates) != len(forms):
        raise RenderError("one template per form is required")
    return [render_form(f, lexicon, rng, t) for f, t in zip(forms, templates)]


def render_context(
    ontology,
    ordering: str,
    lexicon: Lexicon,
    rng: Optional[random.Random] = None,
    distractor: Optional[UniversalImplication] = None,
    templates: Optional[Sequence[Optional[str]]] = None,
) -> tuple[list[str], list[LogicalForm]]:
    """Render the ontology's axioms in traversal order.

    ``ontology`` is anything with an ``axioms(ordering)`` method. The
    distractor, when given, is spliced in at a uniformly random position.
    Returns the sentences and the forms they express, index-aligned.
    """
    if ordering not in ORDERINGS:
        raise GrammarError(f"unknown ordering {ordering!r}")
    forms = list(ontology.axioms(ordering))
    if distractor is not None:
        position = rng.randrange(len(forms) + 1) if rng is not None else len(forms)
        forms.insert(position, distractor)
    return render_sentences(forms, lexicon, rng, templates), forms


def render_cot(
    proof,
    lexicon: Lexicon,
    rng: Optional[random.Random] = None,
    templates: Optional[Sequence[Optional[str]]] = None,
) -> list[str]:
    """One sentence per proof-step conclusion, in proof order."""
    return render_sentences(proof.conclusions, lexicon, rng, templates)
