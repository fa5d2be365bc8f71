import csv
import json

from ontoqa import cli

SMALL = ["--flavor", "fictional", "--hops", "1", "--ordering", "bottom_up", "--examples-per-cell", "6", "--shots", "2"]


def run(*args):
    return cli.main([str(a) for a in args])


def lines(path):
    return path.read_text().splitlines()


class TestGenerate:
    def test_default_grid_has_18_cells(self, tmp_path):
        assert run("generate", "--out", tmp_path, "--examples-per-cell", 1) == 0
        files = sorted((tmp_path / "datasets").glob("*.jsonl"))
        assert len(files) == 18
        assert {f.name for f in files} >= {"true-5hop-top_down.jsonl", "fictional-1hop-bottom_up.jsonl"}

    def test_single_cell_400(self, tmp_path):
        assert run("generate", "--out", tmp_path, "--hops", 1, "--flavor", "fictional", "--ordering", "bottom_up") == 0
        (path,) = (tmp_path / "datasets").glob("*.jsonl")
        header, *examples = lines(path)
        assert len(examples) == 400
        assert json.loads(header)["cell"] == {"flavor": "fictional", "hops": 1, "ordering": "bottom_up"}

    def test_byte_identical(self, tmp_path):
        run("generate", "--out", tmp_path / "a", *SMALL)
        run("generate", "--out", tmp_path / "b", *SMALL)
        name = "datasets/fictional-1hop-bottom_up.jsonl"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_changes_output(self, tmp_path):
        run("generate", "--out", tmp_path / "a", *SMALL, "--seed", 1)
        run("generate", "--out", tmp_path / "b", *SMALL, "--seed", 2)
        name = "datasets/fictional-1hop-bottom_up.jsonl"
        assert lines(tmp_path / "a" / name)[1:] != lines(tmp_path / "b" / name)[1:]


class TestConfig:
    def test_precedence_and_echo(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 5, "examples_per_cell": 3, "flavors": ["true"], "hops": [3], "orderings": ["top_down"]}))
        assert run("generate", "--config", cfg, "--out", tmp_path, "--examples-per-cell", 2) == 0
        header = json.loads(lines(tmp_path / "datasets" / "true-3hop-top_down.jsonl")[0])
        assert header["config"]["seed"] == 5
        assert header["config"]["examples_per_cell"] == 2
        assert "out" not in header["config"]

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"sede": 1}')
        assert run("generate", "--config", cfg, "--out", tmp_path) == cli.EXIT_USAGE

    def test_empty_grid_rejected(self, tmp_path):
        assert run("generate", "--out", tmp_path, "--examples-per-cell", 0) == cli.EXIT_USAGE


class TestPipeline:
    def test_run_gold(self, tmp_path):
        assert run("run", "--out", tmp_path, *SMALL) == 0
        report = json.loads((tmp_path / "reports" / "reports.json").read_text())
        (cell,) = report["reports"]
        assert cell["n"] == 6
        assert cell["label_accuracy"] == 1.0
        assert all(v == 1.0 for v in cell["proof_accuracy"].values())
        assert cell["step_counts"]["canonical"] == cell["total_steps"]

    def test_report_rows_match_cells(self, tmp_path):
        args = ["--flavor", "true", "--flavor", "false", "--hops", 1, "--ordering", "top_down", "--examples-per-cell", 3, "--shots", 1]
        assert run("run", "--out", tmp_path, "--scripted-mode", "noisy", *args) == 0
        rows = list(csv.DictReader((tmp_path / "reports" / "summary.csv").open()))
        assert [(r["flavor"], r["hops"]) for r in rows] == [("true", "1"), ("false", "1")]
        assert (tmp_path / "reports" / "scatter.csv").exists()
        assert (tmp_path / "reports" / "recovery.csv").read_text().startswith("bucket,count\n")

    def test_query_prompts_reproducible(self, tmp_path):
        run("generate", "--out", tmp_path, *SMALL)
        run("query", "--out", tmp_path, *SMALL)
        first = lines(tmp_path / "completions" / "fictional-1hop-bottom_up.jsonl")
        run("query", "--out", tmp_path, *SMALL)
        again = lines(tmp_path / "completions" / "fictional-1hop-bottom_up.jsonl")
        prompts = [json.loads(l)["request"]["prompt"] for l in first[1:]]
        assert prompts == [json.loads(l)["request"]["prompt"] for l in again[1:]]
        assert all(p.count("\n\n") == 2 and p.endswith("\nA:") for p in prompts)

    def test_tampered_completion_refused(self, tmp_path):
        run("generate", "--out", tmp_path, *SMALL)
        run("query", "--out", tmp_path, *SMALL)
        path = tmp_path / "completions" / "fictional-1hop-bottom_up.jsonl"
        rows = lines(path)
        entry = json.loads(rows[2])
        entry["request_hash"] = "0" * 64
        rows[2] = json.dumps(entry)
        path.write_text("\n".join(rows) + "\n")
        assert run("evaluate", "--out", tmp_path, *SMALL) == cli.EXIT_MISMATCH

    def test_shots_must_match(self, tmp_path):
        run("generate", "--out", tmp_path, *SMALL)
        run("query", "--out", tmp_path, *SMALL)
        assert run("evaluate", "--out", tmp_path, *SMALL, "--shots", 3) == cli.EXIT_MISMATCH

    def test_replay_round_trip(self, tmp_path):
        cache = tmp_path / "cache.jsonl"
        assert run("run", "--out", tmp_path / "a", *SMALL, "--cache", cache, "--scripted-mode", "noisy") == 0
        replay = ["--provider", "replay", "--replay", cache, "--model", "scripted-noisy"]
        assert run("run", "--out", tmp_path / "b", *SMALL, *replay) == 0
        # headers differ in the provider name; scored rows must not
        results = "results/fictional-1hop-bottom_up.jsonl"
        assert lines(tmp_path / "a" / results)[1:] == lines(tmp_path / "b" / results)[1:]
        summary = "reports/summary.csv"
        assert (tmp_path / "a" / summary).read_text() == (tmp_path / "b" / summary).read_text()

    def test_replay_miss_is_provider_failure(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        assert run("run", "--out", tmp_path, *SMALL, "--provider", "replay", "--replay", empty) == cli.EXIT_PROVIDER

    def test_token_limit_skips(self, tmp_path):
        assert run("run", "--out", tmp_path, *SMALL, "--token-limit", 461) == 0
        (cell,) = json.loads((tmp_path / "reports" / "reports.json").read_text())["reports"]
        assert cell["n_skipped"] > 0 and cell["n"] + cell["n_skipped"] == 6

    def test_missing_inputs(self, tmp_path):
        assert run("evaluate", "--out", tmp_path, *SMALL) == 1

    def test_all_skipped_cell_is_an_error(self, tmp_path):
        assert run("run", "--out", tmp_path, *SMALL, "--token-limit", 300) == cli.EXIT_MISMATCH
