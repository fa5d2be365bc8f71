import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontoqa.generator import (
    FALSE,
    FICTIONAL,
    FLAVORS,
    TRUE,
    ConceptNode,
    ConfigurationError,
    GenerationError,
    Ontology,
    admissible_starts,
    default_vocabulary,
    generate_distractor,
    generate_ontology,
    generate_proof,
    generate_question,
    make_query,
    parse_chain_file,
    pseudoword,
    walk_proof,
)
from ontoqa.grammar import BOTTOM_UP, TOP_DOWN
from ontoqa.logic import AX, HOP, forward_closure, ground, lit, rule


@pytest.fixture(scope="module")
def vocab():
    return default_vocabulary()


@pytest.fixture
def cat_ontology():
    lines = ["cat -> carnivore", "carnivore -> mammal", "carnivore: ~herbivorous", "mammal: warm_blooded"]
    return Ontology(parse_chain_file(lines), flavor=TRUE)


class TestOntology:
    def test_parse_chain_is_root_first(self, cat_ontology):
        assert cat_ontology.concept_names == ["mammal", "carnivore", "cat"]

    def test_bottom_up_order(self, cat_ontology):
        assert cat_ontology.axioms(BOTTOM_UP) == [
            rule("cat", "carnivore"),
            rule("carnivore", "herbivorous", True),
            rule("carnivore", "mammal"),
            rule("mammal", "warm_blooded"),
        ]

    def test_top_down_is_reverse(self, cat_ontology):
        assert cat_ontology.axioms(TOP_DOWN) == cat_ontology.axioms(BOTTOM_UP)[::-1]

    def test_nonlinear_rejected(self):
        with pytest.raises(ConfigurationError):
            Ontology((ConceptNode("a"), ConceptNode("b", parent="c")))

    def test_branching_chain_file_rejected(self):
        with pytest.raises(ConfigurationError):
            parse_chain_file(["a -> b", "c -> b"])

    def test_distractor_must_be_disconnected(self, cat_ontology):
        with pytest.raises(ConfigurationError):
            cat_ontology.with_distractor(rule("cat", "herbivorous"))


class TestVocabulary:
    def test_bundled_lists(self, vocab):
        assert len(vocab.names) >= 10
        assert len(vocab.true_ontologies) == 3
        assert all(len(chain) >= 6 for _, chain in vocab.true_ontologies)

    def test_concepts_and_properties_disjoint(self, vocab):
        assert not set(vocab.real_concepts) & set(vocab.properties)

    def test_pseudowords_avoid_blocklist(self, vocab):
        rng = random.Random(0)
        words = [pseudoword(rng) for _ in range(500)]
        assert all(w.isalpha() and w.islower() and 4 <= len(w) <= 7 for w in words)


class TestGenerateOntology:
    @pytest.mark.parametrize("flavor", FLAVORS)
    def test_linear(self, flavor, vocab):
        onto = generate_ontology(random.Random(1), flavor, 5, 0.5, vocab)
        assert onto.flavor == flavor
        assert len(set(onto.concept_names)) == len(onto.concept_names)

    def test_true_matches_bundled_chain(self, vocab):
        onto = generate_ontology(random.Random(2), TRUE, vocab=vocab)
        assert onto.chain in {chain for _, chain in vocab.true_ontologies}

    def test_false_avoids_true_edges(self, vocab):
        forbidden = vocab.true_ancestor_pairs
        for seed in range(200):
            onto = generate_ontology(random.Random(seed), FALSE, 7, vocab=vocab)
            for node in onto.chain[1:]:
                assert (node.name, node.parent) not in forbidden

    def test_fictional_words_are_novel(self, vocab):
        onto = generate_ontology(random.Random(5), FICTIONAL, 7, vocab=vocab)
        assert not set(onto.concept_names) & vocab.blocklist

    @pytest.mark.parametrize("kwargs", [{"chain_length": 1}, {"property_rate": 1.5}, {"flavor": "odd"}])
    def test_bad_config(self, kwargs, vocab):
        with pytest.raises(ConfigurationError):
            generate_ontology(random.Random(0), vocab=vocab, **kwargs)


class TestProofs:
    def test_walk(self, cat_ontology):
        proof = walk_proof(cat_ontology, 2, 2, True, "fae")
        assert [s.rule for s in proof.steps] == [AX, AX, HOP, AX, HOP]
        assert proof.goal == ground("herbivorous", "fae", True)
        assert proof.num_hops == 2

    def test_walk_past_root(self, cat_ontology):
        with pytest.raises(GenerationError):
            walk_proof(cat_ontology, 1, 3, False, "fae")

    def test_admissible_starts(self, cat_ontology):
        assert admissible_starts(cat_ontology, 2) == {"node": [2], "property": [1, 2]}

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32), st.sampled_from(FLAVORS), st.sampled_from([1, 2, 3, 4, 5]))
    def test_proofs_are_sound_and_exact(self, seed, flavor, hops):
        rng = random.Random(seed)
        onto = generate_ontology(rng, flavor, hops + 2)
        proof = generate_proof(onto, rng, hops)
        assert proof.num_hops == hops
        assert proof.goal in forward_closure(onto.axioms() + [proof.steps[0].conclusion])

    def test_property_end_probability_extremes(self, cat_ontology):
        rng = random.Random(0)
        always = [generate_proof(cat_ontology, rng, 1, 1.0, "fae").goal for _ in range(20)]
        never = [generate_proof(cat_ontology, rng, 1, 0.0, "fae").goal for _ in range(20)]
        props = {"herbivorous", "warm_blooded"}
        assert all(g.predicate in props for g in always)
        assert not any(g.predicate in props for g in never)


class TestQuestion:
    def test_make_query_polarity(self):
        c = ground("mammal", "fae")
        seen = {make_query(c, random.Random(s)) for s in range(40)}
        assert seen == {(c, True), (c.negate(), False)}

    def test_distractor_opposes_conclusion(self, cat_ontology, vocab):
        c = ground("herbivorous", "fae", True)
        d = generate_distractor(cat_ontology, c, random.Random(0), vocab)
        assert d.consequent == lit("herbivorous")
        assert d.antecedent.predicate not in cat_ontology.concept_names

    @pytest.mark.parametrize("flavor", FLAVORS)
    def test_question_label_matches_closure(self, flavor):
        for seed in range(30):
            rng = random.Random(seed)
            q = generate_question(generate_ontology(rng, flavor, 5), rng, 3)
            closure = forward_closure(list(q.axioms) + [q.start_axiom])
            assert (q.query_form in closure) == q.label
            assert q.conclusion in closure
            assert q.conclusion.negate() not in closure
