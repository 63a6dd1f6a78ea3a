"""Core trace representation and manifest I/O.

This module provides the data structures for execution traces (state
observations joined by actions) and reads/writes the per-trace JSON
manifest that sits next to the trace's PNG screenshots.
"""

import json
import logging
import shutil
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import EmptyTraceError, ManifestError, MissingImageError, UnsupportedImageError
from .utils import PathLike, sha256_bytes

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class TraceRole(str, Enum):
    """Whether a trace is used to learn the model or is validated against it."""
    TRAINING = "training"
    TEST = "test"


@dataclass(frozen=True)
class StateObservation:
    """A single observed state: one screenshot at a position in a trace."""
    index: int
    image: Path
    digest: str
    label: Optional[str] = None

    @property
    def display_name(self) -> str:
        """Label when present, otherwise a short digest prefix."""
        return self.label if self.label else f"state-{self.digest[:8]}"


@dataclass(frozen=True)
class ActionRecord:
    """The action that led from state ``from_index`` to ``to_index``."""
    kind: str
    params: Tuple[Tuple[str, str], ...]
    from_index: int
    to_index: int

    @property
    def signature(self) -> str:
        """Kind plus parameters in key order, e.g. ``click[target=search]``."""
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params))
        return f"{self.kind}[{inner}]"


@dataclass(frozen=True)
class Trace:
    """An ordered run of state observations with one action between each pair."""
    id: str
    states: Tuple[StateObservation, ...]
    actions: Tuple[ActionRecord, ...]
    role: TraceRole = TraceRole.TRAINING
    metadata: Tuple[Tuple[str, str], ...] = field(default=())

    def __post_init__(self) -> None:
        _check_trace_invariants(self.id, self.states, self.actions)

    @property
    def length(self) -> int:
        return len(self.states)

    def meta(self, key: str, default: Optional[str] = None) -> Optional[str]:
        """Look up a metadata value (e.g. the simulated agent self-report)."""
        return dict(self.metadata).get(key, default)


def _check_trace_invariants(trace_id: str, states: Sequence[StateObservation],
                            actions: Sequence[ActionRecord]) -> None:
    if not states:
        raise EmptyTraceError(f"Trace '{trace_id}' has no states")
    for expected, state in enumerate(states):
        if state.index != expected:
            raise ManifestError(
                f"Trace '{trace_id}': state at position {expected} has index {state.index}")
    if len(actions) != len(states) - 1:
        raise ManifestError(
            f"Trace '{trace_id}': {len(states)} states need {len(states) - 1} actions, "
            f"got {len(actions)}")
    for i, action in enumerate(actions):
        if action.from_index != i or action.to_index != i + 1:
            raise ManifestError(
                f"Trace '{trace_id}': action {i} connects {action.from_index}->{action.to_index}")


def read_png(path: Path) -> bytes:
    """Read an image file, rejecting anything that is not a PNG."""
    if not path.is_file():
        raise MissingImageError(f"Image not found: {path}")
    data = path.read_bytes()
    if not data.startswith(PNG_SIGNATURE):
        raise UnsupportedImageError(f"Only PNG images are supported: {path}")
    return data


def observation_from_file(index: int, image_path: PathLike,
                          label: Optional[str] = None) -> StateObservation:
    """Build an observation for an image on disk, computing its digest."""
    path = Path(image_path).resolve()
    return StateObservation(index=index, image=path, digest=sha256_bytes(read_png(path)), label=label)


def _parse_params(raw: Any, where: str) -> Tuple[Tuple[str, str], ...]:
    if raw is None:
        return ()
    if not isinstance(raw, Mapping):
        raise ManifestError(f"{where}: 'params' must be an object")
    return tuple((str(k), str(v)) for k, v in raw.items())


def _parse_manifest(data: Any, base_dir: Path, source: str) -> Trace:
    if not isinstance(data, dict):
        raise ManifestError(f"{source}: manifest must be a JSON object")
    try:
        trace_id = data["id"]
        raw_states = data["states"]
        raw_actions = data.get("actions", [])
    except KeyError as e:
        raise ManifestError(f"{source}: missing field {e}") from e
    if not isinstance(trace_id, str) or not trace_id:
        raise ManifestError(f"{source}: 'id' must be a non-empty string")
    if not isinstance(raw_states, list) or not isinstance(raw_actions, list):
        raise ManifestError(f"{source}: 'states' and 'actions' must be lists")
    if not raw_states:
        raise EmptyTraceError(f"{source}: trace '{trace_id}' has no states")

    try:
        role = TraceRole(data.get("role", TraceRole.TRAINING.value))
    except ValueError as e:
        raise ManifestError(f"{source}: unknown role {data.get('role')!r}") from e

    states: List[StateObservation] = []
    for i, entry in enumerate(raw_states):
        if not isinstance(entry, dict) or not isinstance(entry.get("image"), str):
            raise ManifestError(f"{source}: state {i} needs an 'image' path")
        label = entry.get("label")
        if label is not None and not isinstance(label, str):
            raise ManifestError(f"{source}: state {i} label must be a string")
        states.append(observation_from_file(i, base_dir / entry["image"], label))

    actions: List[ActionRecord] = []
    for i, entry in enumerate(raw_actions):
        if not isinstance(entry, dict) or not isinstance(entry.get("kind"), str):
            raise ManifestError(f"{source}: action {i} needs a 'kind' string")
        actions.append(ActionRecord(
            kind=entry["kind"],
            params=_parse_params(entry.get("params"), f"{source}: action {i}"),
            from_index=i,
            to_index=i + 1,
        ))

    metadata = data.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise ManifestError(f"{source}: 'metadata' must be an object")

    return Trace(
        id=trace_id,
        states=tuple(states),
        actions=tuple(actions),
        role=role,
        metadata=tuple(sorted((str(k), str(v)) for k, v in metadata.items())),
    )


def load_trace(manifest_path: PathLike) -> Trace:
    """
    Load a trace from its JSON manifest.

    Args:
        manifest_path: The manifest file, or the trace directory holding
            ``manifest.json``. Image paths resolve relative to its directory.

    Returns:
        A Trace with every image digest computed

    Raises:
        ManifestError: unreadable JSON or broken invariants
        MissingImageError: a referenced image does not exist
        EmptyTraceError: the manifest lists no states
    """
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ManifestError(f"Manifest not found: {path}") from e
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ManifestError(f"{path}: invalid JSON ({e})") from e

    trace = _parse_manifest(data, path.parent, str(path))
    logger.debug("Loaded trace %s with %d states", trace.id, trace.length)
    return trace


def save_trace(trace: Trace, directory: PathLike) -> Path:
    """
    Write a trace as ``manifest.json`` plus ``NNN.png`` images into a directory.

    Images are copied byte-for-byte, so digests survive the round trip.

    Returns:
        Path of the written manifest
    """
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    states: List[Dict[str, Any]] = []
    for state in trace.states:
        name = f"{state.index:03d}.png"
        target = out_dir / name
        if Path(state.image).resolve() != target.resolve():
            shutil.copyfile(state.image, target)
        entry: Dict[str, Any] = {"image": name}
        if state.label is not None:
            entry["label"] = state.label
        states.append(entry)

    data: Dict[str, Any] = {
        "id": trace.id,
        "role": trace.role.value,
        "states": states,
        "actions": [{"kind": a.kind, "params": dict(a.params)} for a in trace.actions],
    }
    if trace.metadata:
        data["metadata"] = dict(trace.metadata)

    manifest = out_dir / MANIFEST_NAME
    with open(manifest, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    return manifest


def trace_digest_sequence(trace: Trace) -> List[str]:
    """Return the image digests of a trace's states, in trace order."""
    return [state.digest for state in trace.states]
