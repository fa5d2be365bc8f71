"""Examples, few-shot prompts and the JSON Lines dataset format."""

from __future__ import annotations

import hashlib
import json
import random
import re
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .generator import (
    FICTIONAL,
    FLAVORS,
    ConfigurationError,
    GenerationError,
    Ontology,
    Vocabulary,
    generate_ontology,
    generate_question,
)
from .grammar import (
    BOTTOM_UP,
    ORDERINGS,
    Lexicon,
    RenderError,
    parse_query,
    render_context,
    render_cot,
    render_form,
    render_query,
)
from .logic import GroundLiteral, LogicalForm, Proof, parse_form

SCHEMA_VERSION = 1
DEFAULT_RETRIES = 10


class DatasetError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class ExampleConfig:
    flavor: str = FICTIONAL
    num_hops: int = 1
    ordering: str = BOTTOM_UP
    chain_length: Optional[int] = None
    property_rate: float = 0.5
    property_end_prob: float = 0.5

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ConfigurationError(f"unknown flavor {self.flavor!r}")
        if self.ordering not in ORDERINGS:
            raise ConfigurationError(f"unknown ordering {self.ordering!r}")
        if self.num_hops < 1:
            raise ConfigurationError("num_hops must be at least 1")
        if self.chain_length is not None and self.chain_length < self.num_hops:
            raise ConfigurationError("chain_length is too short for num_hops")

    @property
    def effective_chain_length(self) -> int:
        return self.chain_length if self.chain_length is not None else self.num_hops + 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ExampleConfig:
        return cls(**data)


@dataclass(frozen=True)
class PromptConfig:
    num_shots: int = 8
    question_prefix: str = "Q:"
    answer_prefix: str = "A:"

    def __post_init__(self):
        if self.num_shots < 0:
            raise ConfigurationError("num_shots must be non-negative")


@dataclass(frozen=True)
class Example:
    context: tuple[str, ...]
    query: str
    chain_of_thought: tuple[str, ...]
    label: str
    gold_proof: Proof
    axioms: tuple[LogicalForm, ...]
    lexicon: Lexicon
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "context", tuple(self.context))
        object.__setattr__(self, "chain_of_thought", tuple(self.chain_of_thought))
        object.__setattr__(self, "axioms", tuple(self.axioms))
        if self.label not in ("True", "False"):
            raise DatasetError(f"label must be 'True' or 'False', got {self.label!r}")

    @property
    def example_id(self) -> Optional[str]:
        return self.meta.get("id")

    @property
    def start_axiom(self) -> GroundLiteral:
        return self.gold_proof.steps[0].conclusion

    @property
    def query_form(self) -> GroundLiteral:
        _, _, question = self.query.partition(" True or false:")
        return parse_query("True or false:" + question, self.lexicon)

    @property
    def all_axioms(self) -> list[LogicalForm]:
        return list(self.axioms) + [self.start_axiom]

    def to_dict(self) -> dict:
        return {
            "context": list(self.context),
            "query": self.query,
            "chain_of_thought": list(self.chain_of_thought),
            "label": self.label,
            "gold_proof": self.gold_proof.to_list(),
            "axioms": [a.to_text() for a in self.axioms],
            "lexicon": self.lexicon.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Example:
        return cls(
            context=tuple(data["context"]),
            query=data["query"],
            chain_of_thought=tuple(data["chain_of_thought"]),
            label=data["label"],
            gold_proof=Proof.from_list(data["gold_proof"]),
            axioms=tuple(parse_form(a) for a in data["axioms"]),
            lexicon=Lexicon.from_dict(data["lexicon"]),
            meta=dict(data.get("meta", {})),
        )


def lexicon_for(ontology: Ontology, entities: Iterable[str]) -> Lexicon:
    symbols = ontology.symbols()
    return Lexicon.build(symbols["concepts"], symbols["properties"], entities)


def assemble_example(
    ontology: Ontology,
    proof: Proof,
    query_form: GroundLiteral,
    label: bool,
    ordering: str,
    rng: Optional[random.Random] = None,
    context_templates: Optional[Sequence[Optional[str]]] = None,
    cot_templates: Optional[Sequence[Optional[str]]] = None,
    lexicon: Optional[Lexicon] = None,
    meta: Optional[dict] = None,
) -> Example:
    """Render a generated question into text.

    The ontology's last distractor (if any) is spliced into the context.
    """
    start = proof.steps[0].conclusion
    if lexicon is None:
        lexicon = lexicon_for(ontology, [start.subject])
    distractor = ontology.distractors[-1] if ontology.distractors else None
    context, forms = render_context(ontology, ordering, lexicon, rng, distractor, context_templates)
    query = render_form(start, lexicon) + " " + render_query(query_form, lexicon)
    cot = render_cot(proof, lexicon, rng, cot_templates)
    return Example(
        context=tuple(context),
        query=query,
        chain_of_thought=tuple(cot),
        label="True" if label else "False",
        gold_proof=proof,
        axioms=tuple(forms),
        lexicon=lexicon,
        meta=dict(meta or {}),
    )


def build_example(
    config: ExampleConfig,
    rng: random.Random,
    vocab: Optional[Vocabulary] = None,
    retries: int = DEFAULT_RETRIES,
    meta: Optional[dict] = None,
) -> Example:
    """Ontology -> proof -> query -> distractor -> text, retrying failed draws."""
    last_error: Optional[Exception] = None
    for _ in range(retries):
        try:
            ontology = generate_ontology(
                rng, config.flavor, config.effective_chain_length, config.property_rate, vocab
            )
            question = generate_question(ontology, rng, config.num_hops, config.property_end_prob, vocab)
            info = {"flavor": config.flavor, "num_hops": config.num_hops, "ordering": config.ordering}
            info.update(meta or {})
            info["query_form"] = question.query_form.to_text()
            return assemble_example(
                question.ontology,
                question.gold_proof,
                question.query_form,
                question.label,
                config.ordering,
                rng,
                meta=info,
            )
        except (GenerationError, RenderError) as exc:
            last_error = exc
    raise GenerationError(f"example generation failed after {retries} attempts: {last_error}") from last_error


def build_examples(config: ExampleConfig, seed, count: int, vocab: Optional[Vocabulary] = None, tag: str = "") -> list[Example]:
    """``count`` examples, the i-th seeded from ``(seed, tag, i)``."""
    out = []
    for i in range(count):
        example_seed = derive_seed(seed, tag, i)
        meta = {"id": f"{tag}{i}" if tag else str(i), "seed": example_seed}
        out.append(build_example(config, random.Random(example_seed), vocab, meta=meta))
    return out


# -- prompts ----------------------------------------------------------------

def format_question(example: Example, config: PromptConfig = PromptConfig()) -> str:
    return f"{config.question_prefix} {' '.join(example.context)} {example.query}"


def format_answer(example: Example, config: PromptConfig = PromptConfig()) -> str:
    return f"{config.answer_prefix} {' '.join(example.chain_of_thought)} {example.label}"


def build_prompt(shots: Sequence[Example], test: Example, config: PromptConfig = PromptConfig()) -> str:
    """Fully answered shots followed by the test question ending at ``A:``."""
    if not shots:
        warnings.warn("building a zero-shot prompt", stacklevel=2)
    blocks = [f"{format_question(s, config)}\n{format_answer(s, config)}" for s in shots]
    blocks.append(f"{format_question(test, config)}\n{config.answer_prefix}")
    return "\n\n".join(blocks)


_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def estimate_tokens(text: str) -> int:
    """Rough subword count: one token per four characters of each word, one
    per punctuation mark."""
    return sum(max(1, -(-len(t) // 4)) for t in _TOKEN_RE.findall(text))


# -- JSON Lines -------------------------------------------------------------

def write_dataset(path, examples: Iterable[Example], header: Optional[dict] = None) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        record = {"schema_version": SCHEMA_VERSION, "kind": "header"}
        record.update(header or {})
        fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_header(path) -> dict:
    with Path(path).open(encoding="utf-8") as fh:
        first = fh.readline()
    return _parse_header(first)


def _parse_header(line: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed header: {exc}", 1) from exc
    if not isinstance(record, dict) or record.get("kind") != "header":
        raise DatasetError("first record must be the dataset header", 1)
    if record.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"unsupported schema version {record.get('schema_version')!r}", 1)
    return record


def iter_dataset(path) -> Iterator[Example]:
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == 1:
                _parse_header(line)
                continue
            if not line.strip():
                continue
            try:
                yield Example.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetError(f"malformed example: {exc}", lineno) from exc


def read_dataset(path) -> tuple[dict, list[Example]]:
    return read_header(path), list(iter_dataset(path))
