import random

import pytest

from ontoqa.evaluator import split_completion
from ontoqa.perturb import OPERATIONS, gold_completion, perturb_cot


def test_gold_completion(cat_example):
    sentences, label = split_completion(gold_completion(cat_example))
    assert sentences == list(cat_example.chain_of_thought) and label == "True"


@pytest.mark.parametrize("op", sorted(OPERATIONS))
def test_operations_keep_sentences_from_example(cat_example, op):
    pool = set(cat_example.chain_of_thought) | set(cat_example.context)
    for seed in range(20):
        sentences, label = split_completion(perturb_cot(cat_example, random.Random(seed), operations=[op]))
        assert set(sentences) <= pool
        assert label == cat_example.label


def test_deterministic(cat_example):
    a = perturb_cot(cat_example, random.Random(1), num_ops=3, flip_label_prob=0.5)
    b = perturb_cot(cat_example, random.Random(1), num_ops=3, flip_label_prob=0.5)
    assert a == b


def test_flip_label(cat_example):
    _, label = split_completion(perturb_cot(cat_example, random.Random(0), num_ops=0, flip_label_prob=1.0))
    assert label == "False"
