"""Corrupt gold chains of thought: step deletion, rule swaps, reordering."""

from __future__ import annotations

import random
from typing import Callable, Sequence

from .dataset import Example


def delete_step(sentences: list[str], example: Example, rng: random.Random) -> list[str]:
    if len(sentences) > 1:
        del sentences[rng.randrange(len(sentences))]
    return sentences


def swap_rule(sentences: list[str], example: Example, rng: random.Random) -> list[str]:
    """Replace one sentence with a randomly chosen context sentence."""
    if sentences and example.context:
        sentences[rng.randrange(len(sentences))] = rng.choice(example.context)
    return sentences


def reorder(sentences: list[str], example: Example, rng: random.Random) -> list[str]:
    if len(sentences) > 1:
        i, j = rng.sample(range(len(sentences)), 2)
        sentences[i], sentences[j] = sentences[j], sentences[i]
    return sentences


def insert_context(sentences: list[str], example: Example, rng: random.Random) -> list[str]:
    if example.context:
        sentences.insert(rng.randrange(len(sentences) + 1), rng.choice(example.context))
    return sentences


OPERATIONS: dict[str, Callable] = {
    "delete": delete_step,
    "swap_rule": swap_rule,
    "reorder": reorder,
    "insert": insert_context,
}


def gold_completion(example: Example) -> str:
    return " " + " ".join(example.chain_of_thought + (example.label,))


def perturb_cot(
    example: Example,
    rng: random.Random,
    num_ops: int = 1,
    operations: Sequence[str] = tuple(OPERATIONS),
    flip_label_prob: float = 0.0,
) -> str:
    """Apply ``num_ops`` random operations to the gold chain and render it as a
    completion string."""
    sentences = list(example.chain_of_thought)
    for _ in range(num_ops):
        sentences = OPERATIONS[rng.choice(list(operations))](sentences, example, rng)
    label = example.label
    if rng.random() < flip_label_prob:
        label = "False" if label == "True" else "True"
    return " " + " ".join(sentences + [label])
