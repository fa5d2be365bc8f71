"""Synthetic ontology question answering and chain-of-thought proof scoring."""

from .dataset import Example, ExampleConfig, PromptConfig, build_example, build_examples, build_prompt
from .evaluator import METRICS, EvaluationResult, StepClassification, evaluate_cot, is_provable, wilson_interval
from .logic import GroundLiteral, Proof, ProofStep, UniversalImplication, forward_closure, parse_form

__version__ = "0.1.0"

__all__ = [
    "METRICS",
    "EvaluationResult",
    "Example",
    "ExampleConfig",
    "GroundLiteral",
    "Proof",
    "ProofStep",
    "PromptConfig",
    "StepClassification",
    "UniversalImplication",
    "build_example",
    "build_examples",
    "build_prompt",
    "evaluate_cot",
    "forward_closure",
    "is_provable",
    "parse_form",
    "wilson_interval",
]
