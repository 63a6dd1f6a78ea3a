"""Tests for the command-line interface."""

import json
import sys
import os
from unittest import mock
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pytest  # noqa: E402

import main  # noqa: E402


def run_cli(*argv):
    """Run main() with the given arguments and return its exit code."""
    with mock.patch.object(sys, "argv", ["trace-oracle", *[str(a) for a in argv]]):
        with pytest.raises(SystemExit) as exc:
            main.main()
    return exc.value.code


@pytest.fixture(autouse=True)
def no_remote_judge(monkeypatch):
    monkeypatch.delenv("JUDGE_ENDPOINT", raising=False)


@pytest.fixture
def model_file(tmp_path, editor_traces):
    path = tmp_path / "model.json"
    code = run_cli("learn", "--traces", editor_traces["t1"], editor_traces["t2"],
                   editor_traces["t3"], "--out", path)
    assert code == 0
    return path


class TestLearnCommand:
    """Test suite for the learn command."""

    def test_prints_essential_states(self, tmp_path, editor_traces, capsys):
        """Test the summary lists essential and optional states."""
        out_path = tmp_path / "m.json"
        code = run_cli("learn", "--traces", editor_traces["t1"], editor_traces["t2"],
                       editor_traces["t3"], "--out", out_path)
        out = capsys.readouterr().out
        assert code == 0
        assert "Essential states: start_menu -> launch -> main_window -> search_dialog -> results" in out
        assert "Optional states: loading" in out
        assert out_path.is_file()

    def test_byte_identical_models(self, tmp_path, editor_traces):
        """Test two runs on the same inputs write the same bytes."""
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        for path in paths:
            run_cli("learn", "--traces", editor_traces["t1"], editor_traces["t2"],
                    editor_traces["t3"], "--out", path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_missing_trace_is_error(self, tmp_path, capsys):
        """Test unreadable input exits with 2."""
        code = run_cli("learn", "--traces", tmp_path / "nowhere", "--out", tmp_path / "m.json")
        assert code == 2
        assert "Error:" in capsys.readouterr().err

    def test_bad_thresholds_is_error(self, tmp_path, editor_traces):
        """Test an invalid threshold file exits with 2."""
        bad = tmp_path / "t.json"
        bad.write_text(json.dumps({"phash_equal_min": 0.5}), encoding="utf-8")
        code = run_cli("learn", "--traces", editor_traces["t1"], editor_traces["t2"],
                       "--thresholds", bad, "--out", tmp_path / "m.json")
        assert code == 2


class TestValidateCommand:
    """Test suite for the validate command."""

    def test_pass_exit_zero(self, model_file, editor_traces, capsys):
        """Test a run without the loading screen passes."""
        code = run_cli("validate", "--model", model_file, "--trace", editor_traces["no_loading"])
        assert code == 0
        assert "no_loading: PASS" in capsys.readouterr().out

    def test_fail_exit_one_with_report(self, tmp_path, model_file, editor_traces, capsys):
        """Test a run skipping the main window fails and writes a JSON report."""
        report_path = tmp_path / "report.json"
        code = run_cli("validate", "--model", model_file, "--trace",
                       editor_traces["skip_main_window"], "--json", report_path)
        assert code == 1
        assert "Missing essential states" in capsys.readouterr().out
        report = json.loads(report_path.read_text(encoding="utf-8"))
        assert report["verdict"] == "FAIL"
        assert report["missing"] == ["main_window"]

    def test_any_failure_fails(self, model_file, editor_traces):
        """Test several traces exit 1 when one of them fails."""
        code = run_cli("validate", "--model", model_file, "--trace",
                       editor_traces["no_loading"], editor_traces["detour"])
        assert code == 1

    def test_corrupt_model_exit_two(self, tmp_path, editor_traces, capsys):
        """Test a corrupt model file exits with 2."""
        bad = tmp_path / "model.json"
        bad.write_text("not json", encoding="utf-8")
        code = run_cli("validate", "--model", bad, "--trace", editor_traces["no_loading"])
        assert code == 2
        assert "Error:" in capsys.readouterr().err

    def test_malformed_model_node_exit_two(self, model_file, editor_traces, capsys):
        """Test a model whose node entry is not an object exits with 2."""
        data = json.loads(model_file.read_text(encoding="utf-8"))
        data["graph"]["nodes"][0] = "garbage"
        model_file.write_text(json.dumps(data), encoding="utf-8")
        code = run_cli("validate", "--model", model_file, "--trace", editor_traces["no_loading"])
        assert code == 2
        assert "Error:" in capsys.readouterr().err

    def test_undecodable_manifest_exit_two(self, tmp_path, model_file, capsys):
        """Test a manifest that is not UTF-8 exits with 2."""
        trace_dir = tmp_path / "binary"
        trace_dir.mkdir()
        (trace_dir / "manifest.json").write_bytes(b"\xff\xfe\x00garbage")
        code = run_cli("validate", "--model", model_file, "--trace", trace_dir)
        assert code == 2
        assert "Error:" in capsys.readouterr().err


class TestInspectCommand:
    """Test suite for the inspect command."""

    def test_lists_structure(self, model_file, capsys):
        """Test branches, convergence points and optional states are printed."""
        assert run_cli("inspect", "--model", model_file) == 0
        out = capsys.readouterr().out
        assert "Branches: launch" in out
        assert "Convergence points: main_window" in out
        assert "Optional states: loading" in out
        assert "launch -> main_window" in out

    def test_plot(self, tmp_path, model_file):
        """Test the graph plot is written."""
        plot = tmp_path / "plots" / "graph.png"
        assert run_cli("inspect", "--model", model_file, "--plot", plot) == 0
        assert plot.is_file()


class TestBenchCommand:
    """Test suite for the bench command."""

    def test_small_benchmark(self, tmp_path, capsys):
        """Test a small spec writes a report."""
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"passing": 2, "agent_issue": 1, "product_bug": 1,
                                    "false_success": 1, "missed_bug": 1, "seed": 3}),
                        encoding="utf-8")
        report = tmp_path / "report.json"
        assert run_cli("bench", "--spec", spec, "--report", report) == 0
        data = json.loads(report.read_text(encoding="utf-8"))
        assert data["validator"]["accuracy"] == 1.0
        assert "Root-cause accuracy" in capsys.readouterr().out

    def test_non_numeric_threshold_exit_two(self, tmp_path, capsys):
        """Test a bench spec with a non-numeric threshold exits with 2."""
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"coverage_threshold": "abc"}), encoding="utf-8")
        assert run_cli("bench", "--spec", spec, "--report", tmp_path / "r.json") == 2
        assert "Error:" in capsys.readouterr().err


class TestParser:
    """Test suite for argument handling."""

    def test_no_command(self):
        """Test running without a command prints help and exits 2."""
        assert run_cli() == 2

    def test_unknown_judge(self, model_file, editor_traces):
        """Test argparse rejects unknown judge modes."""
        assert run_cli("validate", "--model", model_file, "--trace",
                       editor_traces["no_loading"], "--judge", "oracle") == 2
