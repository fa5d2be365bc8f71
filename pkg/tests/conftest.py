import json
from pathlib import Path

import pytest

from ontoqa.dataset import assemble_example
from ontoqa.generator import Ontology, parse_chain_file, walk_proof

FIXTURES = Path(__file__).parent / "fixtures"

CAT_CHAIN = """\
cat -> carnivore
carnivore -> mammal
mammal -> vertebrate
vertebrate -> animal
carnivore: ~herbivorous
mammal: warm_blooded
animal: multicellular
"""

CAT_CONTEXT_TEMPLATES = ["each", "every", "bare", "all", "bare", "every", "bare"]
CAT_COT_TEMPLATES = ["ground", "bare", "ground", "every", "ground"]


def make_cat_example():
    """Two-hop question about Fae the cat, rendered with fixed templates."""
    onto = Ontology(parse_chain_file(CAT_CHAIN.splitlines()), flavor="true")
    proof = walk_proof(onto, 4, 2, True, "fae")
    return assemble_example(
        onto,
        proof,
        proof.goal,
        True,
        "bottom_up",
        context_templates=CAT_CONTEXT_TEMPLATES,
        cot_templates=CAT_COT_TEMPLATES,
        meta={"id": "fae-cat"},
    )


@pytest.fixture(scope="session")
def cat_example():
    return make_cat_example()


@pytest.fixture(scope="session")
def step_types_fixture():
    return json.loads((FIXTURES / "step_types.json").read_text())


@pytest.fixture(scope="session")
def analytics_fixture():
    return json.loads((FIXTURES / "analytics.json").read_text())


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
