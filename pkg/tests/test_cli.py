from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from oncotwin.cli import main
from oncotwin.model import encode_twin


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def fixture_store(tmp_path, runner):
    store_dir = tmp_path / "twins"
    result = runner.invoke(main, ["seed-fixtures", "--store", str(store_dir)])
    assert result.exit_code == 0, result.output
    return store_dir


class TestSampleSize:
    def test_paper_parameters_print_367(self, runner):
        result = runner.invoke(
            main, ["sample-size", "--Z", "1.96", "--N", "7956", "--e", "0.05", "--P", "0.5", "--format", "table"]
        )
        assert result.exit_code == 0
        assert result.output.strip() == "367"

    def test_json_format_is_stable_keyed(self, runner):
        result = runner.invoke(main, ["sample-size", "--Z", "1.96", "--N", "7956", "--e", "0.05", "--P", "0.5"])
        body = json.loads(result.output)
        assert body["n"] == 367
        assert list(body) == sorted(body)

    def test_domain_error_exits_1(self, runner):
        result = runner.invoke(main, ["sample-size", "--Z", "0", "--N", "10", "--e", "0.05", "--P", "0.5"])
        assert result.exit_code == 1

    def test_missing_option_is_usage_error(self, runner):
        result = runner.invoke(main, ["sample-size", "--Z", "1.96"])
        assert result.exit_code == 2


class TestSummarize:
    def test_literature_medians(self, runner, fixture_store):
        result = runner.invoke(
            main, ["summarize", "--store", str(fixture_store), "--source", "literature"]
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["median_pfs"] == 4.0
        assert body["median_os"] == 9.9
        assert body["os_range"] == [2.1, 48.0]
        assert body["vital_status_counts"] == {"alive": 6, "deceased": 7, "unknown": 1}

    def test_json_output_is_diffable_across_runs(self, runner, fixture_store):
        args = ["summarize", "--store", str(fixture_store), "--source", "institutional"]
        first = runner.invoke(main, args).output
        second = runner.invoke(main, args).output
        assert first == second


class TestStoreCommands:
    def test_put_get_query(self, runner, fixture_store, tmp_path, case_1):
        twin_file = tmp_path / "twin.json"
        twin_file.write_text(json.dumps(encode_twin(case_1.with_updates(id="case-x"))), encoding="utf-8")
        result = runner.invoke(main, ["store", "put", str(twin_file), "--store", str(fixture_store)])
        assert result.exit_code == 0
        assert json.loads(result.output)["count"] == 22

        result = runner.invoke(main, ["store", "get", "case-x", "--store", str(fixture_store)])
        assert result.exit_code == 0
        assert json.loads(result.output)["id"] == "case-x"

        result = runner.invoke(
            main, ["store", "query", "source == literature and mmr == pMMR", "--store", str(fixture_store)]
        )
        assert json.loads(result.output)["count"] == 9

    def test_get_missing_exits_1(self, runner, fixture_store):
        result = runner.invoke(main, ["store", "get", "nope", "--store", str(fixture_store)])
        assert result.exit_code == 1


class TestValidate:
    def test_valid_twin(self, runner, tmp_path, case_1):
        twin_file = tmp_path / "twin.json"
        twin_file.write_text(json.dumps(encode_twin(case_1)), encoding="utf-8")
        result = runner.invoke(main, ["validate", str(twin_file)])
        assert result.exit_code == 0
        assert json.loads(result.output)["errors"] == 0

    def test_invalid_twin_exits_1(self, runner, tmp_path, case_1):
        broken = encode_twin(case_1)
        broken["diagnosis"] = ""
        twin_file = tmp_path / "twin.json"
        twin_file.write_text(json.dumps(broken), encoding="utf-8")
        result = runner.invoke(main, ["validate", str(twin_file)])
        assert result.exit_code == 1


class TestMatch:
    def test_funnel_with_synthetics(self, runner, fixture_store):
        result = runner.invoke(main, ["match", "--store", str(fixture_store), "--include-synthetic"])
        body = json.loads(result.output)
        stages = {s["stage"]: s["count"] for s in body["stages"]}
        assert stages["ici"] == 7


class TestEvaluateCommand:
    def test_adjudication_file_and_linter(self, runner, tmp_path):
        from oncotwin.evaluation import synthesize_adjudications
        from oncotwin.fixtures import load_table1_rows

        rows = load_table1_rows()
        adj_path = tmp_path / "adjudications.jsonl"
        with adj_path.open("w", encoding="utf-8") as f:
            for record in synthesize_adjudications([r for r in rows if r["source"] == "literature"]):
                f.write(json.dumps(record.to_dict()) + "\n")
        table_path = tmp_path / "table1.json"
        table_path.write_text(json.dumps({"rows": rows}), encoding="utf-8")

        result = runner.invoke(
            main, ["evaluate", "--adjudications", str(adj_path), "--lint-table", str(table_path)]
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        total = next(r for r in body["rows"] if r["attribute"] == "TOTAL")
        assert total["precision"] == 1.0
        flagged = {(f["source"], f["attribute"]) for f in body["lint"]}
        assert len(flagged) >= 2

    def test_requires_an_input(self, runner):
        assert runner.invoke(main, ["evaluate"]).exit_code == 2


class TestExtractCommand:
    def test_privacy_guard_refuses_cloud_ehr_before_reading_manifest(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "extract",
                "--backend", "cloud",
                "--origin", "ehr",
                "--manifest", str(tmp_path / "missing.jsonl"),  # never read: guard fires first
                "--text-cache", str(tmp_path),
            ],
        )
        assert result.exit_code == 1
        assert "refusing to send ehr-origin content" in result.output

    def test_mock_end_to_end_via_cli(self, runner, tmp_path):
        from oncotwin.extraction import reply_key
        from oncotwin.ingestion import normalize_text

        source = tmp_path / "doc.txt"
        text = "cli study: one UCS case treated with pembrolizumab"
        source.write_text(text, encoding="utf-8")
        manifest = tmp_path / "manifest.jsonl"
        cache = tmp_path / "cache"
        cache.mkdir()
        result = runner.invoke(
            main,
            ["ingest", str(source), "--origin", "literature", "--manifest", str(manifest), "--text-cache", str(cache)],
        )
        assert result.exit_code == 0, result.output

        replies = tmp_path / "replies"
        replies.mkdir()
        payload = {
            "n": 1, "age": "63", "gender": "n/a", "race": "n/a", "diagnosis": "UCS",
            "biomarkers": {"pd-l1": "n/a", "tmb/mb": "n/a", "msi/mss": "pMMR", "others": "n/a"},
            "previous treatments": "n/a", "study treatment": "pembrolizumab", "treatment line": 2,
            "study treatment response": {"treatment response": "SD", "adverse effects": "n/a"},
            "PFS": "4", "OS": "11", "main recommendation": "n/a",
        }
        key = reply_key(normalize_text(text))
        (replies / f"{key}.json").write_text(json.dumps({"output": json.dumps(payload)}), encoding="utf-8")

        store_dir = tmp_path / "twins"
        result = runner.invoke(
            main,
            [
                "extract",
                "--backend", "mock",
                "--manifest", str(manifest),
                "--text-cache", str(cache),
                "--replies-dir", str(replies),
                "--store", str(store_dir),
                "--seed", "3",
            ],
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["report"]["extracted"] == 1
        assert len(body["stored"]) == 1


class TestRecommendAndLetter:
    def test_recommend_table_format(self, runner, fixture_store):
        result = runner.invoke(
            main,
            ["recommend", "case-1", "--store", str(fixture_store), "--region", "Bavaria",
             "--allow-off-label", "--as-of", "2024-08-15", "--format", "table"],
        )
        assert result.exit_code == 0, result.output
        assert "HER2" in result.output
        assert "trial_referral" in result.output

    def test_letter_cites_cps_and_analogs(self, runner, fixture_store):
        result = runner.invoke(
            main,
            ["letter", "case-1", "--biomarker", "HER2", "--store", str(fixture_store),
             "--region", "Bavaria", "--allow-off-label", "--as-of", "2024-08-15", "--with-analogs"],
        )
        assert result.exit_code == 0, result.output
        assert "CPS: 41" in result.output
        assert "Analog cohort outcomes (n=6)" in result.output

    def test_letter_determinism(self, runner, fixture_store):
        args = ["letter", "case-1", "--biomarker", "HER2", "--store", str(fixture_store),
                "--region", "Bavaria", "--allow-off-label", "--as-of", "2024-08-15"]
        assert runner.invoke(main, args).output == runner.invoke(main, args).output

    def test_unknown_biomarker_exits_1(self, runner, fixture_store):
        result = runner.invoke(
            main, ["letter", "case-1", "--biomarker", "XYZ", "--store", str(fixture_store)]
        )
        assert result.exit_code == 1
