"""``ontoqa`` command line: generate, query, evaluate, report, run."""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import random
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import analysis
from .dataset import (
    SCHEMA_VERSION,
    DatasetError,
    Example,
    ExampleConfig,
    PromptConfig,
    build_examples,
    build_prompt,
    derive_seed,
    read_dataset,
    write_dataset,
)
from .evaluator import METRICS, EvaluationResult, evaluate_cot
from .generator import FLAVORS, ConfigurationError, GenerationError
from .grammar import ORDERINGS
from .llm_client import (
    DEFAULT_API_KEY_ENV,
    DEFAULT_MAX_TOKENS,
    CompletionClient,
    CompletionRecord,
    CompletionRequest,
    HTTPProvider,
    ProviderError,
    ReplayProvider,
    ScriptedProvider,
)
from .perturb import gold_completion, perturb_cot

logger = logging.getLogger("ontoqa")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_GENERATION = 3
EXIT_PROVIDER = 4
EXIT_MISMATCH = 5

HOPS = (1, 3, 5)
PROVIDERS = ("scripted", "http", "replay")
SCRIPTED_MODES = ("gold", "noisy")

DEFAULTS = {
    "seed": 0,
    "flavors": list(FLAVORS),
    "hops": list(HOPS),
    "orderings": list(ORDERINGS),
    "examples_per_cell": 400,
    "shots": 8,
    "metric": "valid",
    "model": None,
    "provider": "scripted",
    "scripted_mode": "gold",
    "url": None,
    "api_key_env": DEFAULT_API_KEY_ENV,
    "cache": None,
    "replay": None,
    "max_tokens": DEFAULT_MAX_TOKENS,
    "token_limit": 2049,
    "max_in_flight": 4,
    "requests_per_minute": None,
    "max_retries": 4,
}
# Keys that locate files rather than define the experiment; kept out of
# output metadata so relocating a run does not change its artifacts.
_LOCATION_KEYS = ("out", "cache", "replay")


class ScoringMismatch(RuntimeError):
    pass


@dataclass(frozen=True)
class Cell:
    flavor: str
    hops: int
    ordering: str

    @property
    def key(self) -> str:
        return f"{self.flavor}-{self.hops}hop-{self.ordering}"

    def config(self) -> ExampleConfig:
        return ExampleConfig(self.flavor, self.hops, self.ordering)

    def to_dict(self, model: Optional[str] = None) -> dict:
        d = {"flavor": self.flavor, "hops": self.hops, "ordering": self.ordering}
        if model is not None:
            d["model"] = model
        return d


def grid_cells(config: dict) -> list[Cell]:
    for axis in ("flavors", "hops", "orderings"):
        if not config[axis]:
            raise ConfigurationError(f"grid axis {axis!r} is empty")
    if config["examples_per_cell"] < 1:
        raise ConfigurationError("examples_per_cell must be at least 1")
    for f in config["flavors"]:
        if f not in FLAVORS:
            raise ConfigurationError(f"unknown flavor {f!r}")
    for o in config["orderings"]:
        if o not in ORDERINGS:
            raise ConfigurationError(f"unknown ordering {o!r}")
    for h in config["hops"]:
        if int(h) < 1:
            raise ConfigurationError(f"invalid hop count {h!r}")
    return [Cell(f, int(h), o) for f, h, o in itertools.product(config["flavors"], config["hops"], config["orderings"])]


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the JSON config file, then explicit flags."""
    config = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(loaded) - set(DEFAULTS) - {"out"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    for key in list(DEFAULTS) + ["out"]:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    config.setdefault("out", "ontoqa-out")
    if config["metric"] not in METRICS:
        raise ConfigurationError(f"unknown metric {config['metric']!r}")
    if config["provider"] not in PROVIDERS:
        raise ConfigurationError(f"unknown provider {config['provider']!r}")
    if config["model"] is None:
        config["model"] = f"scripted-{config['scripted_mode']}" if config["provider"] == "scripted" else "default"
    return config


def metadata(config: dict) -> dict:
    return {k: v for k, v in sorted(config.items()) if k not in _LOCATION_KEYS}


def _paths(config: dict, cell: Cell) -> dict[str, Path]:
    out = Path(config["out"])
    return {
        "dataset": out / "datasets" / f"{cell.key}.jsonl",
        "completions": out / "completions" / f"{cell.key}.jsonl",
        "results": out / "results" / f"{cell.key}.jsonl",
    }


def _dump(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n"


def _example_digest(example: Example) -> str:
    return hashlib.sha256(_dump(example.to_dict()).encode("utf-8")).hexdigest()


# -- generate ---------------------------------------------------------------

def cmd_generate(config: dict) -> list[Path]:
    written = []
    for index, cell in enumerate(grid_cells(config)):
        seed = derive_seed(config["seed"], "cell", cell.key)
        examples = build_examples(cell.config(), seed, config["examples_per_cell"], tag=f"{cell.key}/")
        path = _paths(config, cell)["dataset"]
        header = {"cell": cell.to_dict(), "cell_index": index, "seed": seed, "config": metadata(config)}
        write_dataset(path, examples, header)
        logger.info("wrote %d examples to %s", len(examples), path)
        written.append(path)
    return written


# -- query ------------------------------------------------------------------

def shots_for(cell: Cell, config: dict, index: int) -> list[Example]:
    """Fresh few-shot examples for test example ``index``, seeded per cell."""
    if config["shots"] == 0:
        return []
    seed = derive_seed(config["seed"], "shots", cell.key, index)
    return build_examples(cell.config(), seed, config["shots"], tag=f"{cell.key}/shot{index}/")


def request_for(example: Example, shots: Sequence[Example], config: dict) -> CompletionRequest:
    prompt = build_prompt(shots, example, PromptConfig(num_shots=len(shots)))
    return CompletionRequest(prompt, model=config["model"], max_tokens=config["max_tokens"])


def _load_cell(config: dict, cell: Cell) -> list[Example]:
    path = _paths(config, cell)["dataset"]
    if not path.exists():
        raise FileNotFoundError(f"dataset {path} not found; run `generate` first")
    return read_dataset(path)[1]


def _scripted_responder(config: dict, answers: dict[str, Example]):
    mode = config["scripted_mode"]
    if mode not in SCRIPTED_MODES:
        raise ConfigurationError(f"unknown scripted mode {mode!r}")

    def respond(request: CompletionRequest) -> str:
        example = answers[request.request_hash]
        if mode == "gold":
            return gold_completion(example)
        rng = random.Random(derive_seed("noisy", request.request_hash))
        if rng.random() < 0.4:
            return gold_completion(example)
        return perturb_cot(example, rng, num_ops=rng.randint(1, 2), flip_label_prob=0.2)

    return respond


def make_client(config: dict, answers: Optional[dict] = None) -> CompletionClient:
    provider_name = config["provider"]
    if provider_name == "scripted":
        provider = ScriptedProvider(_scripted_responder(config, answers if answers is not None else {}))
    elif provider_name == "http":
        if not config["url"]:
            raise ConfigurationError("the http provider needs --url")
        provider = HTTPProvider(config["url"], config["api_key_env"])
    else:
        if not config["replay"]:
            raise ConfigurationError("the replay provider needs --replay")
        provider = ReplayProvider(config["replay"])
    return CompletionClient(
        provider,
        cache_path=config["cache"],
        token_limit=config["token_limit"],
        max_retries=config["max_retries"],
        max_in_flight=config["max_in_flight"],
        requests_per_minute=config["requests_per_minute"],
        clock=(lambda: 0.0) if provider_name == "scripted" else time.time,
    )


def cmd_query(config: dict) -> list[Path]:
    written = []
    answers: dict[str, Example] = {}
    client = make_client(config, answers)
    for cell in grid_cells(config):
        examples = _load_cell(config, cell)
        requests = []
        for i, ex in enumerate(examples):
            req = request_for(ex, shots_for(cell, config, i), config)
            answers[req.request_hash] = ex
            requests.append(req)
        records = client.complete_many(requests)
        path = _paths(config, cell)["completions"]
        path.parent.mkdir(parents=True, exist_ok=True)
        skipped = 0
        with path.open("w", encoding="utf-8") as fh:
            fh.write(_dump({"kind": "header", "schema_version": SCHEMA_VERSION, "cell": cell.to_dict(config["model"]), "config": metadata(config)}))
            for ex, req, rec in zip(examples, requests, records):
                skipped += rec.skipped
                entry = rec.to_dict()
                entry.update(example_id=ex.example_id, example_digest=_example_digest(ex), request=req.canonical())
                fh.write(_dump(entry))
        if skipped:
            logger.warning("%s: %d prompts skipped for exceeding the token limit", cell.key, skipped)
        logger.info("wrote %d completions to %s", len(records), path)
        written.append(path)
    return written


# -- evaluate ---------------------------------------------------------------

def _read_completions(path: Path) -> list[dict]:
    if not path.exists():
        raise FileNotFoundError(f"completions {path} not found; run `query` first")
    lines = path.read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines[1:] if line.strip()]


def cmd_evaluate(config: dict) -> list[Path]:
    """Score completions, refusing any whose request does not match the
    prompt rebuilt from the dataset."""
    written = []
    for cell in grid_cells(config):
        examples = _load_cell(config, cell)
        entries = _read_completions(_paths(config, cell)["completions"])
        if len(entries) != len(examples):
            raise ScoringMismatch(f"{cell.key}: {len(entries)} completions for {len(examples)} examples")
        results = []
        for i, (ex, entry) in enumerate(zip(examples, entries)):
            expected = request_for(ex, shots_for(cell, config, i), config)
            if entry.get("example_digest") != _example_digest(ex) or entry["request_hash"] != expected.request_hash:
                raise ScoringMismatch(f"{cell.key}: completion {i} does not match example {ex.example_id}")
            record = CompletionRecord.from_dict(entry)
            if record.skipped:
                results.append(EvaluationResult.skipped_result(ex.example_id, ex.label))
            else:
                results.append(evaluate_cot(ex, record.text))
        path = _paths(config, cell)["results"]
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(_dump({"kind": "header", "schema_version": SCHEMA_VERSION, "cell": cell.to_dict(config["model"]), "config": metadata(config)}))
            for r in results:
                fh.write(_dump(r.to_dict()))
        logger.info("wrote %d results to %s", len(results), path)
        written.append(path)
    return written


# -- report -----------------------------------------------------------------

def read_results(path: Path) -> tuple[dict, list[EvaluationResult]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DatasetError(f"empty results file {path}")
    header = json.loads(lines[0])
    return header, [EvaluationResult.from_dict(json.loads(line)) for line in lines[1:] if line.strip()]


def cmd_report(config: dict) -> list[Path]:
    reports = []
    first_errors: dict = {}
    recovery: dict = {}
    for cell in grid_cells(config):
        path = _paths(config, cell)["results"]
        if not path.exists():
            raise FileNotFoundError(f"results {path} not found; run `evaluate` first")
        header, results = read_results(path)
        report = analysis.aggregate(results, header["cell"], config["metric"])
        reports.append(report)
        for k, v in report.first_errors.items():
            first_errors[k] = first_errors.get(k, 0) + v
        for k, v in report.recovery.items():
            recovery[k] = recovery.get(k, 0) + v

    out = Path(config["out"]) / "reports"
    payload = {"config": metadata(config), "reports": [r.to_dict() for r in reports]}
    if len(reports) >= 2:
        corr = analysis.correlate(reports)
        payload["correlation"] = {m: c.r for m, c in corr.items()}
        analysis.write_text(out / "scatter.csv", analysis.scatter_csv(reports))
        analysis.write_text(out / "correlation.csv", analysis.correlation_csv(corr))
    analysis.write_json(out / "reports.json", payload)
    analysis.write_text(out / "summary.csv", analysis.summary_csv(reports))
    analysis.write_text(out / "first_errors.csv", analysis.histogram_csv(first_errors))
    analysis.write_text(out / "recovery.csv", analysis.histogram_csv(recovery))
    return sorted(out.iterdir())


def cmd_run(config: dict) -> list[Path]:
    paths = cmd_generate(config)
    paths += cmd_query(config)
    paths += cmd_evaluate(config)
    paths += cmd_report(config)
    return paths


COMMANDS = {
    "generate": cmd_generate,
    "query": cmd_query,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "run": cmd_run,
}


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of defaults; explicit flags take precedence")
    common.add_argument("--out", help="output directory (default: ontoqa-out)")
    common.add_argument("--seed", type=int)
    common.add_argument("--flavor", dest="flavors", action="append", choices=FLAVORS, help="repeatable")
    common.add_argument("--hops", dest="hops", action="append", type=int, help="repeatable")
    common.add_argument("--ordering", dest="orderings", action="append", choices=ORDERINGS, help="repeatable")
    common.add_argument("--examples-per-cell", dest="examples_per_cell", type=int)
    common.add_argument("--shots", type=int)
    common.add_argument("--metric", choices=METRICS, help="metric used for first-error attribution")
    common.add_argument("--model")
    common.add_argument("--provider", choices=PROVIDERS)
    common.add_argument("--scripted-mode", dest="scripted_mode", choices=SCRIPTED_MODES)
    common.add_argument("--url", help="completion endpoint for the http provider")
    common.add_argument("--api-key-env", dest="api_key_env", help=f"variable holding the credential (default {DEFAULT_API_KEY_ENV})")
    common.add_argument("--cache", help="append-only JSON Lines completion cache")
    common.add_argument("--replay", help="recorded completions for the replay provider")
    common.add_argument("--max-tokens", dest="max_tokens", type=int)
    common.add_argument("--token-limit", dest="token_limit", type=int)
    common.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    common.add_argument("--requests-per-minute", dest="requests_per_minute", type=float)
    common.add_argument("--max-retries", dest="max_retries", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ontoqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).splitlines()[0])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = resolve_config(args)
        COMMANDS[args.command](config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GenerationError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except ProviderError as exc:
        print(f"provider failed: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (ScoringMismatch, DatasetError, analysis.AnalysisError) as exc:
        print(f"refusing to score: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
