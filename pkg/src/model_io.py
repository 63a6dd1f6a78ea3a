"""
Model file persistence.

The model is a single JSON document holding the dominator tree, the merged
execution graph, the digest-to-class table and a threshold snapshot.
Output is byte-stable: keys are sorted, floats have fixed precision and no
timestamps are written. Representative images are referenced relative to
the model file and checked against their digests on load.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict

from .equivalence import EquivalenceThresholds
from .errors import ModelFormatError, ThresholdError, TraceOracleError
from .graph_learn import (DominatorInfo, DominatorTree, ExecutionGraph, GraphEdge, GraphNode,
                          LearnedModel, MemberRef, TraceWalk)
from .trace_model import StateObservation
from .utils import PathLike, relative_posix, sha256_file, write_stable_json

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1.0"


def _node_to_dict(node: GraphNode, base_dir: Path) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "id": node.id,
        "name": node.name,
        "is_terminal": node.is_terminal,
        "members": [[m.trace_id, m.index, m.digest] for m in node.members],
        "action_signatures": list(node.action_signatures),
        "representative": None,
    }
    rep = node.representative
    if rep is not None:
        data["representative"] = {
            "image": relative_posix(rep.image, base_dir),
            "digest": rep.digest,
            "index": rep.index,
            "label": rep.label,
        }
    return data


def model_to_dict(model: LearnedModel, base_dir: PathLike) -> Dict[str, Any]:
    """JSON-ready form of a model; image paths relative to ``base_dir``."""
    base = Path(base_dir)
    graph = model.graph
    tree = model.tree
    return {
        "format_version": FORMAT_VERSION,
        "training_traces": list(model.training_ids),
        "thresholds": model.thresholds.to_dict(),
        "graph": {
            "initial": graph.initial,
            "terminals": list(graph.terminals),
            "nodes": [_node_to_dict(n, base) for n in graph.nodes],
            "edges": [{"source": e.source, "target": e.target, "actions": dict(e.actions)}
                      for e in graph.edges],
            "walks": [{"trace_id": w.trace_id, "nodes": list(w.nodes),
                       "indices": list(w.indices), "actions": list(w.actions)}
                      for w in graph.walks],
        },
        "dominators": {"idom": {str(k): v for k, v in sorted(model.dominators.idom.items())}},
        "tree": {
            "initial": tree.initial,
            "nodes": list(tree.nodes),
            "edges": [list(e) for e in tree.edges],
            "terminals": list(tree.terminals),
            "topo_order": list(tree.topo_order),
            "essential_states": tree.essential_names(),
        },
        "class_table": model.class_table(),
    }


def save_model(model: LearnedModel, path: PathLike) -> None:
    """Write the model file; identical models give byte-identical files."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_stable_json(out, model_to_dict(model, out.parent))
    logger.info("Model written to %s", out)


def _node_from_dict(data: Dict[str, Any], base_dir: Path) -> GraphNode:
    rep = None
    raw_rep = data.get("representative")
    if raw_rep is not None:
        image = (base_dir / raw_rep["image"]).resolve()
        if not image.is_file():
            raise ModelFormatError(f"Model references a missing image: {image}")
        if sha256_file(image) != raw_rep["digest"]:
            raise ModelFormatError(f"Image {image} changed since the model was learned")
        rep = StateObservation(index=int(raw_rep["index"]), image=image,
                               digest=raw_rep["digest"], label=raw_rep.get("label"))
    return GraphNode(
        id=int(data["id"]),
        name=str(data["name"]),
        representative=rep,
        members=tuple(MemberRef(str(t), int(i), str(d)) for t, i, d in data["members"]),
        is_terminal=bool(data["is_terminal"]),
        action_signatures=tuple(data.get("action_signatures", [])),
    )


def model_from_dict(data: Dict[str, Any], base_dir: PathLike) -> LearnedModel:
    """Rebuild a model from its JSON form."""
    if not isinstance(data, dict):
        raise ModelFormatError("Model file must hold a JSON object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"Unsupported model format version {version!r} (expected {FORMAT_VERSION})")
    base = Path(base_dir)
    try:
        g = data["graph"]
        graph = ExecutionGraph(
            nodes=tuple(_node_from_dict(n, base) for n in g["nodes"]),
            edges=tuple(GraphEdge(int(e["source"]), int(e["target"]),
                                  tuple(sorted((str(k), int(v)) for k, v in e["actions"].items())))
                        for e in g["edges"]),
            initial=int(g["initial"]),
            terminals=tuple(int(t) for t in g["terminals"]),
            walks=tuple(TraceWalk(str(w["trace_id"]), tuple(w["nodes"]), tuple(w["indices"]),
                                  tuple(w["actions"])) for w in g.get("walks", [])),
        )
        dominators = DominatorInfo(
            idom={int(k): int(v) for k, v in data["dominators"]["idom"].items()},
            initial=graph.initial,
        )
        t = data["tree"]
        tree = DominatorTree(
            nodes=tuple(int(n) for n in t["nodes"]),
            edges=tuple((int(p), int(c)) for p, c in t["edges"]),
            initial=int(t["initial"]),
            terminals=tuple(int(n) for n in t["terminals"]),
            topo_order=tuple(int(n) for n in t["topo_order"]),
            graph=graph,
        )
        thresholds = EquivalenceThresholds.from_dict(data["thresholds"])
        training = tuple(str(x) for x in data["training_traces"])
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError, AttributeError, ThresholdError) as e:
        raise ModelFormatError(f"Corrupt model file: {e!r}") from e
    except TraceOracleError as e:
        raise ModelFormatError(f"Inconsistent model file: {e}") from e

    if not tree.nodes:
        raise ModelFormatError("Model has no essential states")
    return LearnedModel(graph=graph, dominators=dominators, tree=tree,
                        thresholds=thresholds, training_ids=training)


def load_model(path: PathLike) -> LearnedModel:
    """
    Read a model file.

    Raises:
        ModelFormatError: unreadable, corrupt or version-mismatched file
    """
    p = Path(path)
    try:
        with open(p, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ModelFormatError(f"Model file not found: {p}") from e
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFormatError(f"Model file {p} is not valid JSON: {e}") from e
    return model_from_dict(data, p.parent)
