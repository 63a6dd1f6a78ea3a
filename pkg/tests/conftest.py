"""Shared fixtures: rendered frames and the editor-search traces."""

import json
import os
import sys

import pytest
from PIL import Image

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.bench import Frame, write_trace  # noqa: E402
from src.equivalence import EquivalenceClassifier  # noqa: E402
from src.graph_learn import learn_model  # noqa: E402
from src.judge import MockJudge  # noqa: E402
from src.trace_model import TraceRole, load_trace  # noqa: E402

TYPE_APP = ("type", (("text", "VS Code"),))
ENTER = ("key", (("keys", "enter"),))
WAIT = ("wait", (("seconds", "2"),))
SEARCH = ("key", (("keys", "ctrl+shift+f"),))
QUERY = ("type", (("text", "needle"),))
OFF_SCRIPT = ("click", (("target", "settings"),))

SLOTS = {
    "start_menu": 0,
    "launch": 1,
    "loading": 2,
    "main_window": 3,
    "search_dialog": 4,
    "results": 5,
    "detour_settings": 6,
    "broken_main_window": 9,
}

ESSENTIAL = ["start_menu", "launch", "main_window", "search_dialog", "results"]


def frames(*names, jitter=None):
    """Frames for the named states; ``jitter`` maps a name to its cosmetic variant."""
    jitter = jitter or {}
    return [Frame(n, SLOTS[n], jitter.get(n, 0)) for n in names]


def write_png(path, colour=(10, 20, 30), size=(32, 24)):
    """Write a solid-colour PNG and return its path."""
    Image.new("RGB", size, colour).save(path, format="PNG")
    return path


def write_manifest(directory, data):
    """Write a raw manifest dict and return its path."""
    path = directory / "manifest.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


@pytest.fixture
def editor_traces(tmp_path):
    """Three passing runs (two with the loading screen) plus test runs."""
    root = tmp_path / "traces"
    specs = {
        "t1": (frames("start_menu", "launch", "loading", "main_window", "search_dialog", "results"),
               [TYPE_APP, ENTER, WAIT, SEARCH, QUERY], TraceRole.TRAINING),
        "t2": (frames("start_menu", "launch", "main_window", "search_dialog", "results"),
               [TYPE_APP, ENTER, SEARCH, QUERY], TraceRole.TRAINING),
        "t3": (frames("start_menu", "launch", "loading", "main_window", "search_dialog", "results",
                      jitter={"main_window": 2, "results": 1}),
               [TYPE_APP, ENTER, WAIT, SEARCH, QUERY], TraceRole.TRAINING),
        "no_loading": (frames("start_menu", "launch", "main_window", "search_dialog", "results",
                              jitter={"launch": 3}),
                       [TYPE_APP, ENTER, SEARCH, QUERY], TraceRole.TEST),
        "skip_main_window": (frames("start_menu", "launch", "search_dialog", "results"),
                             [TYPE_APP, SEARCH, QUERY], TraceRole.TEST),
        "broken_main_window": (frames("start_menu", "launch", "broken_main_window"),
                               [TYPE_APP, ENTER], TraceRole.TEST),
        "detour": (frames("start_menu", "launch", "main_window", "detour_settings"),
                   [TYPE_APP, ENTER, OFF_SCRIPT], TraceRole.TEST),
    }
    paths = {}
    for trace_id, (trace_frames, actions, role) in specs.items():
        paths[trace_id] = root / trace_id
        write_trace(paths[trace_id], trace_id, trace_frames, actions, role)
    return paths


@pytest.fixture
def training_traces(editor_traces):
    return [load_trace(editor_traces[k]) for k in ("t1", "t2", "t3")]


@pytest.fixture
def editor_model(training_traces):
    """Model learned from the three passing runs with the mock judge."""
    return learn_model(training_traces, EquivalenceClassifier(judge=MockJudge()))
