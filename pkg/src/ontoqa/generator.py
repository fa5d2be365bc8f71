"""Sampling of linear ontologies, gold proofs, queries and distractors."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .grammar import BOTTOM_UP, FUNCTION_WORDS, ORDERINGS, TOP_DOWN, pluralize
from .logic import (
    AX,
    HOP,
    GroundLiteral,
    LogicalForm,
    PredicateLiteral,
    Proof,
    ProofStep,
    UniversalImplication,
    apply_hop,
    ground,
)

FICTIONAL = "fictional"
TRUE = "true"
FALSE = "false"
FLAVORS = (FICTIONAL, TRUE, FALSE)

_CONSONANTS = "bcdfghjklmnprstvwz"
_VOWELS = "aeiou"
_CODAS = "snrlmp"


class GenerationError(RuntimeError):
    """Sampling failed; callers may retry with a fresh draw."""


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ConceptNode:
    name: str
    property: Optional[PredicateLiteral] = None
    parent: Optional[str] = None


@dataclass(frozen=True)
class Ontology:
    """Linear concept chain, root first, plus disconnected distractor rules."""

    chain: tuple[ConceptNode, ...]
    distractors: tuple[UniversalImplication, ...] = ()
    flavor: str = FICTIONAL

    def __post_init__(self):
        object.__setattr__(self, "chain", tuple(self.chain))
        object.__setattr__(self, "distractors", tuple(self.distractors))
        for i, node in enumerate(self.chain):
            expected = self.chain[i - 1].name if i else None
            if node.parent != expected:
                raise ConfigurationError(f"chain is not linear at {node.name!r}")
        names = self.concept_names
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate concept in chain")
        for d in self.distractors:
            if d.antecedent.predicate in names:
                raise ConfigurationError(f"distractor concept {d.antecedent.predicate!r} is in the chain")

    @property
    def concept_names(self) -> list[str]:
        return [n.name for n in self.chain]

    @property
    def property_symbols(self) -> list[str]:
        return [n.property.predicate for n in self.chain if n.property is not None]

    def subtype_axiom(self, index: int) -> UniversalImplication:
        node = self.chain[index]
        return UniversalImplication(PredicateLiteral(node.name), PredicateLiteral(node.parent))

    def property_axiom(self, index: int) -> UniversalImplication:
        node = self.chain[index]
        return UniversalImplication(PredicateLiteral(node.name), node.property)

    def axioms(self, ordering: str = BOTTOM_UP) -> list[UniversalImplication]:
        """Ontology axioms (without distractors) in traversal order.

        Bottom-up walks leaf to root emitting each node's property before its
        subtype edge; top-down is the exact reverse.
        """
        if ordering not in ORDERINGS:
            raise ConfigurationError(f"unknown ordering {ordering!r}")
        out = []
        for i in range(len(self.chain) - 1, -1, -1):
            if self.chain[i].property is not None:
                out.append(self.property_axiom(i))
            if self.chain[i].parent is not None:
                out.append(self.subtype_axiom(i))
        if ordering == TOP_DOWN:
            out.reverse()
        return out

    def with_distractor(self, distractor: UniversalImplication) -> Ontology:
        return replace(self, distractors=self.distractors + (distractor,))

    def symbols(self) -> dict[str, list[str]]:
        concepts = self.concept_names + [d.antecedent.predicate for d in self.distractors]
        return {"concepts": concepts, "properties": self.property_symbols}


@dataclass(frozen=True)
class GeneratedQuestion:
    axioms: tuple[LogicalForm, ...]
    start_axiom: GroundLiteral
    gold_proof: Proof
    query_form: GroundLiteral
    label: bool
    num_hops: int
    ontology: Ontology = field(compare=False, default=None)

    @property
    def conclusion(self) -> GroundLiteral:
        return self.gold_proof.goal


# -- vocabulary -------------------------------------------------------------

def _read_lines(path) -> list[str]:
    lines = []
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


def parse_chain_file(lines: Sequence[str]) -> tuple[ConceptNode, ...]:
    """Parse ``child -> parent`` and ``node: [~]property`` lines into a chain."""
    parent_of: dict[str, str] = {}
    props: dict[str, PredicateLiteral] = {}
    for line in lines:
        if "->" in line:
            child, parent = (s.strip() for s in line.split("->"))
            if child in parent_of:
                raise ConfigurationError(f"{child!r} has two parents")
            parent_of[child] = parent
        elif ":" in line:
            node, prop = (s.strip() for s in line.split(":"))
            props[node] = PredicateLiteral(prop.lstrip("~"), prop.startswith("~"))
        else:
            raise ConfigurationError(f"bad chain line: {line!r}")
    children = set(parent_of)
    roots = set(parent_of.values()) - children
    if len(roots) != 1:
        raise ConfigurationError("chain must have exactly one root")
    child_of = {p: c for c, p in parent_of.items()}
    if len(child_of) != len(parent_of):
        raise ConfigurationError("ontology is not linear")
    order = [roots.pop()]
    while order[-1] in child_of:
        order.append(child_of[order[-1]])
    nodes = []
    for i, name in enumerate(order):
        nodes.append(ConceptNode(name, props.get(name), order[i - 1] if i else None))
    return tuple(nodes)


@dataclass(frozen=True)
class Vocabulary:
    names: tuple[str, ...]
    properties: tuple[str, ...]
    real_concepts: tuple[str, ...]
    true_ontologies: tuple[tuple[str, tuple[ConceptNode, ...]], ...]
    blocklist: frozenset

    @classmethod
    def load(cls, directory: Optional[Path] = None) -> Vocabulary:
        root = Path(directory) if directory else resources.files("ontoqa") / "data"
        true_dir = root / "true_ontologies"
        chains = tuple(
            (p.name.rsplit(".", 1)[0], parse_chain_file(_read_lines(p)))
            for p in sorted(true_dir.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".txt")
        )
        names = tuple(_read_lines(root / "names.txt"))
        properties = tuple(_read_lines(root / "properties.txt"))
        concepts = tuple(_read_lines(root / "real_concepts.txt"))
        block = {w.lower() for w in _read_lines(root / "blocklist.txt")}
        block |= {n.lower() for n in names} | set(properties) | set(concepts) | FUNCTION_WORDS
        for _, chain in chains:
            for node in chain:
                block.add(node.name)
                if node.property is not None:
                    block.add(node.property.predicate)
        return cls(names, properties, concepts, chains, frozenset(block))

    @property
    def true_ancestor_pairs(self) -> frozenset:
        pairs = set()
        for _, chain in self.true_ontologies:
            names = [n.name for n in chain]
            for i, anc in enumerate(names):
                for desc in names[i + 1:]:
                    pairs.add((desc, anc))
        return frozenset(pairs)


@lru_cache(maxsize=None)
def default_vocabulary() -> Vocabulary:
    return Vocabulary.load()


def pseudoword(rng: random.Random) -> str:
    syllables = rng.randint(2, 3)
    word = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(syllables))
    if rng.random() < 0.5:
        word += rng.choice(_CODAS)
    return word


def fresh_pseudowords(rng: random.Random, count: int, taken: set, vocab: Vocabulary, attempts: int = 1000) -> list[str]:
    """Sample ``count`` pseudowords whose singular and plural are both unused."""
    out = []
    for _ in range(attempts):
        if len(out) == count:
            break
        word = pseudoword(rng)
        plural = pluralize(word)
        if {word, plural} & (taken | vocab.blocklist):
            continue
        taken |= {word, plural}
        out.append(word)
    if len(out) < count:
        raise GenerationError("could not sample enough distinct pseudowords")
    return out


def _sample_properties(rng: random.Random, count: int, rate: float, vocab: Vocabulary) -> list[Optional[PredicateLiteral]]:
    flags = [rng.random() < rate for _ in range(count)]
    needed = sum(flags)
    if needed > len(vocab.properties):
        raise GenerationError("property pool exhausted")
    picks = iter(rng.sample(vocab.properties, needed))
    return [PredicateLiteral(next(picks), rng.random() < 0.5) if f else None for f in flags]


def _link(names: Sequence[str], props: Sequence[Optional[PredicateLiteral]]) -> tuple[ConceptNode, ...]:
    return tuple(
        ConceptNode(name, prop, names[i - 1] if i else None) for i, (name, prop) in enumerate(zip(names, props))
    )


def generate_ontology(
    rng: random.Random,
    flavor: str = FICTIONAL,
    chain_length: int = 3,
    property_rate: float = 0.5,
    vocab: Optional[Vocabulary] = None,
) -> Ontology:
    """Sample a linear ontology.

    ``true`` returns one of the bundled real chains verbatim and ignores
    ``chain_length`` and ``property_rate``.
    """
    vocab = vocab or default_vocabulary()
    if flavor not in FLAVORS:
        raise ConfigurationError(f"unknown flavor {flavor!r}")
    if chain_length < 2:
        raise ConfigurationError("chain_length must be at least 2")
    if not 0.0 <= property_rate <= 1.0:
        raise ConfigurationError("property_rate must be a probability")

    if flavor == TRUE:
        _, chain = rng.choice(vocab.true_ontologies)
        return Ontology(chain, flavor=TRUE)

    if flavor == FICTIONAL:
        names = fresh_pseudowords(rng, chain_length, set(), vocab)
    else:
        pool = [c for c in vocab.real_concepts if c not in vocab.properties]
        if chain_length > len(pool):
            raise GenerationError("real concept pool exhausted")
        forbidden = vocab.true_ancestor_pairs
        for _ in range(100):
            names = rng.sample(pool, chain_length)
            if not any((names[i], names[i - 1]) in forbidden for i in range(1, chain_length)):
                break
        else:
            raise GenerationError("could not sample a false ontology")
    props = _sample_properties(rng, chain_length, property_rate, vocab)
    return Ontology(_link(names, props), flavor=flavor)


def admissible_starts(ontology: Ontology, num_hops: int) -> dict[str, list[int]]:
    """Chain indices from which a walk of exactly ``num_hops`` exists, keyed by
    whether the walk ends at a node or at a node's property."""
    n = len(ontology.chain)
    node_end = [i for i in range(n) if i - num_hops >= 0]
    prop_end = [
        i for i in range(n) if i - num_hops + 1 >= 0 and ontology.chain[i - num_hops + 1].property is not None
    ]
    return {"node": node_end, "property": prop_end}


def generate_proof(
    ontology: Ontology,
    rng: random.Random,
    num_hops: int,
    property_end_prob: float = 0.5,
    entity: Optional[str] = None,
    vocab: Optional[Vocabulary] = None,
) -> Proof:
    """Walk up the chain from a uniformly chosen admissible start node.

    The first step asserts the entity's type; each hop is preceded by an Ax
    step for the rule it uses.
    """
    if num_hops < 1:
        raise ConfigurationError("num_hops must be at least 1")
    starts = admissible_starts(ontology, num_hops)
    kind = "property" if rng.random() < property_end_prob else "node"
    if not starts[kind]:
        kind = "node" if kind == "property" else "property"
    if not starts[kind]:
        raise GenerationError(f"no start node admits {num_hops} hops")
    start = rng.choice(starts[kind])
    if entity is None:
        vocab = vocab or default_vocabulary()
        entity = rng.choice(vocab.names).lower()
    return walk_proof(ontology, start, num_hops, kind == "property", entity)


def walk_proof(ontology: Ontology, start: int, num_hops: int, end_at_property: bool, entity: str) -> Proof:
    """Deterministic walk from chain index ``start``; see :func:`generate_proof`."""
    fact = ground(ontology.chain[start].name, entity)
    steps = [ProofStep(AX, (), fact)]
    index = start
    for hop in range(num_hops):
        last = hop == num_hops - 1
        if last and end_at_property:
            if ontology.chain[index].property is None:
                raise GenerationError(f"{ontology.chain[index].name!r} has no property")
            implication = ontology.property_axiom(index)
        else:
            if index == 0:
                raise GenerationError("walk passed the root")
            implication = ontology.subtype_axiom(index)
            index -= 1
        steps.append(ProofStep(AX, (), implication))
        derived = apply_hop(implication, fact)
        steps.append(ProofStep(HOP, (fact, implication), derived))
        fact = derived
    return Proof(tuple(steps))


def make_query(conclusion: GroundLiteral, rng: random.Random) -> tuple[GroundLiteral, bool]:
    """Ask about the conclusion itself (label True) or its negation (False)."""
    if rng.random() < 0.5:
        return conclusion, True
    return conclusion.negate(), False


def generate_distractor(
    ontology: Ontology,
    conclusion: GroundLiteral,
    rng: random.Random,
    vocab: Optional[Vocabulary] = None,
) -> UniversalImplication:
    """A rule from a novel concept to the opposite polarity of the proved literal."""
    vocab = vocab or default_vocabulary()
    used = set(ontology.concept_names) | set(ontology.property_symbols)
    used |= {d.antecedent.predicate for d in ontology.distractors}
    if ontology.flavor == FICTIONAL:
        taken = used | {pluralize(c) for c in ontology.concept_names}
        (novel,) = fresh_pseudowords(rng, 1, taken, vocab)
    else:
        pool = [c for c in vocab.real_concepts if c not in used and c not in vocab.properties]
        if not pool:
            raise GenerationError("no unused real concept for the distractor")
        novel = rng.choice(pool)
    return UniversalImplication(PredicateLiteral(novel), conclusion.literal.negate())


def generate_question(
    ontology: Ontology,
    rng: random.Random,
    num_hops: int,
    property_end_prob: float = 0.5,
    vocab: Optional[Vocabulary] = None,
) -> GeneratedQuestion:
    proof = generate_proof(ontology, rng, num_hops, property_end_prob, vocab=vocab)
    query_form, label = make_query(proof.goal, rng)
    distractor = generate_distractor(ontology, proof.goal, rng, vocab)
    ontology = ontology.with_distractor(distractor)
    axioms = tuple(ontology.axioms(BOTTOM_UP)) + ontology.distractors
    return GeneratedQuestion(
        axioms=axioms,
        start_axiom=proof.steps[0].conclusion,
        gold_proof=proof,
        query_form=query_form,
        label=label,
        num_hops=num_hops,
        ontology=ontology,
    )
