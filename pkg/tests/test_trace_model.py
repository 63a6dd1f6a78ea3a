"""Tests for the trace_model module."""

import hashlib
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pytest  # noqa: E402

from src.errors import (EmptyTraceError, ManifestError, MissingImageError,  # noqa: E402
                        UnsupportedImageError)
from src.trace_model import (ActionRecord, TraceRole, load_trace, save_trace,  # noqa: E402
                             trace_digest_sequence)
from tests.conftest import write_manifest, write_png  # noqa: E402


def _two_state_dir(tmp_path):
    write_png(tmp_path / "a.png", (200, 0, 0))
    write_png(tmp_path / "b.png", (0, 200, 0))
    return tmp_path


class TestLoadTrace:
    """Test suite for manifest loading."""

    def test_load_from_directory(self, tmp_path):
        """Test loading a trace from its directory computes file digests."""
        _two_state_dir(tmp_path)
        write_manifest(tmp_path, {
            "id": "run-1",
            "states": [{"image": "a.png", "label": "start"}, {"image": "b.png"}],
            "actions": [{"kind": "click", "params": {"target": "ok"}}],
        })
        trace = load_trace(tmp_path)

        assert trace.id == "run-1"
        assert trace.length == 2
        assert trace.role == TraceRole.TRAINING
        assert trace.states[0].label == "start"
        assert trace.states[1].label is None
        expected = hashlib.sha256((tmp_path / "a.png").read_bytes()).hexdigest()
        assert trace.states[0].digest == expected
        assert trace.actions[0].from_index == 0 and trace.actions[0].to_index == 1

    def test_load_from_manifest_file(self, tmp_path):
        """Test the manifest path itself is accepted."""
        _two_state_dir(tmp_path)
        manifest = write_manifest(tmp_path, {
            "id": "run-2", "role": "test",
            "states": [{"image": "a.png"}, {"image": "b.png"}],
            "actions": [{"kind": "wait"}],
            "metadata": {"self_report": "success"},
        })
        trace = load_trace(manifest)
        assert trace.role == TraceRole.TEST
        assert trace.meta("self_report") == "success"
        assert trace.meta("absent", "x") == "x"

    def test_single_state_trace(self, tmp_path):
        """Test a one-state trace needs no actions."""
        write_png(tmp_path / "a.png")
        write_manifest(tmp_path, {"id": "solo", "states": [{"image": "a.png"}]})
        assert load_trace(tmp_path).length == 1

    def test_missing_image(self, tmp_path):
        """Test a manifest pointing at a missing file."""
        write_manifest(tmp_path, {"id": "x", "states": [{"image": "nope.png"}]})
        with pytest.raises(MissingImageError):
            load_trace(tmp_path)

    def test_empty_trace(self, tmp_path):
        """Test a manifest without states."""
        write_manifest(tmp_path, {"id": "x", "states": []})
        with pytest.raises(EmptyTraceError):
            load_trace(tmp_path)

    def test_action_count_mismatch(self, tmp_path):
        """Test m states need exactly m-1 actions."""
        _two_state_dir(tmp_path)
        write_manifest(tmp_path, {"id": "x", "states": [{"image": "a.png"}, {"image": "b.png"}],
                                  "actions": []})
        with pytest.raises(ManifestError):
            load_trace(tmp_path)

    def test_non_png_rejected(self, tmp_path):
        """Test JPEG-like bytes are rejected."""
        (tmp_path / "a.jpg").write_bytes(b"\xff\xd8\xff\xe0 not a png")
        write_manifest(tmp_path, {"id": "x", "states": [{"image": "a.jpg"}]})
        with pytest.raises(UnsupportedImageError):
            load_trace(tmp_path)

    def test_invalid_json(self, tmp_path):
        """Test a manifest that is not JSON."""
        (tmp_path / "manifest.json").write_text("{not json", encoding="utf-8")
        with pytest.raises(ManifestError):
            load_trace(tmp_path)

    def test_manifest_not_utf8(self, tmp_path):
        """Test undecodable manifest bytes are a manifest error."""
        (tmp_path / "manifest.json").write_bytes(b"\xff\xfe{\"id\": \"x\"}")
        with pytest.raises(ManifestError):
            load_trace(tmp_path)

    def test_unknown_role(self, tmp_path):
        """Test roles other than training/test are rejected."""
        write_png(tmp_path / "a.png")
        write_manifest(tmp_path, {"id": "x", "role": "golden", "states": [{"image": "a.png"}]})
        with pytest.raises(ManifestError):
            load_trace(tmp_path)


class TestActionRecord:
    """Test suite for action signatures."""

    def test_signature_sorts_params(self):
        """Test parameters appear in key order."""
        action = ActionRecord("click", (("y", "2"), ("x", "1")), 0, 1)
        assert action.signature == "click[x=1,y=2]"

    def test_signature_without_params(self):
        """Test a bare action kind."""
        assert ActionRecord("wait", (), 0, 1).signature == "wait[]"


class TestSaveTrace:
    """Test suite for writing traces."""

    def test_save_preserves_digests_and_metadata(self, tmp_path, editor_traces):
        """Test a saved copy loads back with the same digests, labels and actions."""
        original = load_trace(editor_traces["t3"])
        copy_dir = tmp_path / "copy"
        manifest = save_trace(original, copy_dir)

        assert manifest == copy_dir / "manifest.json"
        reloaded = load_trace(copy_dir)
        assert trace_digest_sequence(reloaded) == trace_digest_sequence(original)
        assert [s.label for s in reloaded.states] == [s.label for s in original.states]
        assert [a.signature for a in reloaded.actions] == [a.signature for a in original.actions]
        assert (copy_dir / "000.png").is_file()
