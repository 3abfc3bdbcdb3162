"""Versioned snapshots of the graph and skill memory.

One JSON file holds both stores plus a config echo. Writes are atomic
(temp file then rename) so an interrupted save never clobbers the previous
snapshot. Loading re-validates every store invariant and refuses snapshots
whose format version is newer than this build understands. Embedding values
ride as plain JSON numbers, which round-trip float64 bit-exactly through
Python's shortest-repr encoding.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from .errors import CorruptSnapshotError, ContractViolation, SnapshotError, SnapshotVersionError
from .graph import StateGraph
from .memory import SkillMemory

SNAPSHOT_VERSION = 1


def save(graph: StateGraph, memory: SkillMemory, config: dict,
         path: str | Path, created_step: int = 0) -> None:
    """Atomically write a snapshot; the previous file survives any failure."""
    path = Path(path)
    payload = {
        "format_version": SNAPSHOT_VERSION,
        "created_step": created_step,
        "config": config,
        "graph": graph.to_dict(),
        "memory": memory.to_dict(),
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp_name, path)
        finally:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
    except OSError as exc:
        raise SnapshotError(f"cannot write snapshot {path}: {exc}") from exc


def load(path: str | Path) -> tuple[StateGraph, SkillMemory, dict]:
    """Load and re-validate a snapshot; raises naming any violated invariant."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"snapshot {path} does not exist")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc

    version = payload.get("format_version")
    if not isinstance(version, int) or version > SNAPSHOT_VERSION:
        raise SnapshotVersionError(
            f"snapshot {path} has format_version {version!r}; this build supports "
            f"up to {SNAPSHOT_VERSION}"
        )
    try:
        memory = SkillMemory.from_dict(payload["memory"])
        graph = StateGraph.from_dict(payload["graph"], skill_registry=memory)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSnapshotError(f"snapshot {path} is malformed: {exc}") from exc
    try:
        graph.validate()
        memory.validate()
        _validate_cross_references(graph, memory)
    except ContractViolation as exc:
        raise CorruptSnapshotError(f"snapshot {path}: {exc}") from exc
    return graph, memory, payload.get("config", {})


def _validate_cross_references(graph: StateGraph, memory: SkillMemory) -> None:
    for (src, dst, skill_id) in graph.skill_edges:
        if not memory.has_skill(skill_id):
            raise ContractViolation(
                f"invariant skill-edge-refers-to-live-skill violated: skill {skill_id}"
            )
    for stats in memory.search_stats.values():
        if stats.node_id not in graph.nodes:
            raise ContractViolation(
                f"invariant tree-stats-node-exists violated: node {stats.node_id}"
            )
