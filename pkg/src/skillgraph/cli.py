"""Operator CLI: run training rounds, export graphs, inspect traces.

Subcommands: ``run``, ``export-graph``, ``top-skills``, ``replay``,
``stats``. Config precedence is flags > JSON config file > defaults. All
outputs are deterministic for a fixed manifest; wall-clock timestamps only
appear in ``run_meta.json``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from .engine import Engine, EngineConfig
from .errors import SkillGraphError
from .graph import GraphConfig, StateGraph
from .memory import SkillMemory
from .oracle import PERSONAS, ScriptedOracle
from .persistence import load as load_snapshot
from .persistence import save as save_snapshot
from .rewards import RewardSwitches
from .trace import EpisodeTrace, episode_metrics
from .world import Simulator, World, generate_world

ABLATIONS = ("similarity_edges", "reward_state", "reward_novel")

STATS_COLUMNS = [
    "round", "library_size", "skills_augmented", "skills_pruned",
    "nodes", "skill_edges", "similarity_edges",
    "progression", "responsive_rate", "oracle_cost",
]


@dataclass
class RunManifest:
    world: str = "combo-heavy"      # profile name or path to a world JSON file
    oracle: str = "perfect"         # persona name or http(s) endpoint URL
    seed: int = 0
    rounds: int = 1
    steps: int = 100                # decision steps per round
    out: str = "runs/latest"
    ablate: list[str] = field(default_factory=list)
    zones: int | None = None
    grounding_rate: float | None = None
    resume: str | None = None       # snapshot to continue from
    start_round: int = 0

    @classmethod
    def from_sources(cls, args: argparse.Namespace) -> "RunManifest":
        values: dict = {}
        if getattr(args, "config", None):
            values.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        for f in fields(cls):
            flag = getattr(args, f.name, None)
            if flag is not None:
                values[f.name] = flag
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise SystemExit(f"unknown manifest keys: {sorted(unknown)}")
        manifest = cls(**values)
        for switch in manifest.ablate:
            if switch not in ABLATIONS:
                raise SystemExit(f"unknown ablation {switch!r}; expected one of {ABLATIONS}")
        return manifest

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def build_world(manifest: RunManifest) -> World:
    if manifest.world.endswith(".json") or "/" in manifest.world:
        world = World.load(manifest.world)
    else:
        world = generate_world(manifest.world, manifest.seed, zones=manifest.zones)
    if manifest.grounding_rate is not None:
        world.grounding_failure_rate = manifest.grounding_rate
    return world


def build_oracle(manifest: RunManifest, world: World):
    if manifest.oracle.startswith("http://") or manifest.oracle.startswith("https://"):
        from .remote import RemoteOracle

        return RemoteOracle(manifest.oracle)
    if manifest.oracle not in PERSONAS:
        raise SystemExit(f"unknown oracle {manifest.oracle!r}; persona or URL expected")
    return ScriptedOracle(world, persona=manifest.oracle, seed=manifest.seed)


def run_rounds(manifest: RunManifest):
    """Execute the manifest; returns (rows, traces, graph, memory)."""
    world = build_world(manifest)
    oracle = build_oracle(manifest, world)
    switches = RewardSwitches(
        state="reward_state" not in manifest.ablate,
        novel="reward_novel" not in manifest.ablate,
    )
    graph_cfg = GraphConfig(similarity_edges="similarity_edges" not in manifest.ablate)

    if manifest.resume:
        graph, memory, saved_cfg = load_snapshot(manifest.resume)
        start_step = int(saved_cfg.get("engine_step", 0))
    else:
        graph = StateGraph(graph_cfg, dimension=world.dimension)
        memory = SkillMemory(cluster_threshold=graph_cfg.thresholds.link_threshold)
        graph.skill_registry = memory
        start_step = 0

    sim = Simulator(world, seed=manifest.seed)
    engine = Engine(sim, oracle, memory, graph,
                    EngineConfig(switches=switches), seed=manifest.seed)
    engine.step = start_step

    out = Path(manifest.out)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    traces: list[EpisodeTrace] = []
    for offset in range(manifest.rounds):
        round_no = manifest.start_round + offset
        trace = engine.run_episode(max_steps=manifest.steps, episode=round_no)
        traces.append(trace)
        progression, responsive, cost = episode_metrics(trace)
        stats = graph.stats()
        rows.append({
            "round": round_no,
            "library_size": memory.library_size(),
            "skills_augmented": sum(len(s.augmented) for s in trace.steps),
            "skills_pruned": sum(len(s.pruned) for s in trace.steps),
            "nodes": stats.nodes,
            "skill_edges": stats.skill_edges,
            "similarity_edges": stats.similarity_edges,
            "progression": progression,
            "responsive_rate": responsive,
            "oracle_cost": cost,
        })
        trace.save(out / f"trace_round{round_no}.jsonl")
        save_snapshot(graph, memory,
                      config={"manifest": manifest.to_dict(), "engine_step": engine.step},
                      path=out / f"snapshot_round{round_no}.json",
                      created_step=engine.step)
    return rows, traces, graph, memory


def stats_text(rows: list[dict]) -> str:
    widths = {c: max(len(c), 6) for c in STATS_COLUMNS}
    lines = ["  ".join(c.rjust(widths[c]) for c in STATS_COLUMNS)]
    for row in rows:
        lines.append("  ".join(_fmt(row[c]).rjust(widths[c]) for c in STATS_COLUMNS))
    return "\n".join(lines) + "\n"


def stats_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STATS_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in STATS_COLUMNS])
    return buf.getvalue()


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


# -- subcommands -------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    manifest = RunManifest.from_sources(args)
    rows, _traces, _graph, _memory = run_rounds(manifest)
    out = Path(manifest.out)
    text = stats_text(rows)
    (out / "stats.txt").write_text(text, encoding="utf-8")
    (out / "stats.csv").write_text(stats_csv(rows), encoding="utf-8")
    (out / "run_meta.json").write_text(
        json.dumps({"manifest": manifest.to_dict(), "finished_at": time.time()}, indent=1),
        encoding="utf-8",
    )
    sys.stdout.write(text)
    return 0


def cmd_export_graph(args: argparse.Namespace) -> int:
    graph, memory, _cfg = load_snapshot(args.snapshot)
    if args.format == "json":
        rendered = json.dumps(graph.to_dict(), indent=1)
    elif args.format == "dot":
        rendered = graph.to_dot(
            skill_names=lambda sid: memory.skills[sid].name if sid in memory.skills else str(sid)
        )
    else:
        raise SystemExit(f"unknown format {args.format!r}")
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
    else:
        sys.stdout.write(rendered)
    return 0


def cmd_top_skills(args: argparse.Namespace) -> int:
    graph, memory, _cfg = load_snapshot(args.snapshot)
    edges = sorted(graph.skill_edges.values(),
                   key=lambda e: (-e.weight, e.skill_id, e.src, e.dst))
    rows = edges[: args.k]
    sys.stdout.write(f"{'weight':>8}  {'skill':>5}  {'edge':>9}  name\n")
    for e in rows:
        name = memory.skills[e.skill_id].name if e.skill_id in memory.skills else "?"
        sys.stdout.write(f"{e.weight:8.4f}  {e.skill_id:5d}  n{e.src:3d}->n{e.dst:<3d}  {name}\n")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    trace = EpisodeTrace.load(args.trace)
    progression, responsive, cost = episode_metrics(trace)
    sys.stdout.write(
        f"episode {trace.episode}  steps {len(trace.steps)}  ended {trace.ended}  "
        f"progression {progression}  responsive {responsive:.4f}  oracle cost {cost}\n"
    )
    for step in trace.steps:
        sys.stdout.write(f"step {step.step:4d}  node n{step.node_id}  stage {step.stage}\n")
        for att in step.attempts:
            r = att.reward
            out = att.outcome
            what = f"skill {att.skill_id}" if att.skill_id is not None else \
                f"action {att.proposed_action.get('object_name') or att.proposed_action.get('object_id')}"
            status = "grounding-failed" if out["grounding_failed"] else (
                f"{out['src_screen']}->{out['dst_screen']}")
            sys.stdout.write(
                f"  [{att.stage}] {what}: {status}  delta {out['delta']:.3f}  "
                f"reward {r['progress']:.3f}+{r['semantics']:.3f}+{r['state']:+.3f}"
                f"+{r['novel']:.3f} = {r['total']:.3f}"
            )
            if out.get("milestone"):
                sys.stdout.write(f"  milestone {out['milestone']}")
            sys.stdout.write("\n")
        if step.augmented:
            sys.stdout.write(f"  + skills {step.augmented}\n")
        if step.pruned:
            sys.stdout.write(f"  - skills {step.pruned}\n")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    out = Path(args.dir)
    path = out / "stats.csv"
    if not path.exists():
        raise SystemExit(f"no stats.csv under {out}")
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    typed = []
    for row in rows:
        typed.append({
            c: (float(row[c]) if c == "responsive_rate" else int(float(row[c])))
            for c in STATS_COLUMNS
        })
    sys.stdout.write(stats_text(typed))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skillgraph",
                                     description="skill-evolution agent harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run training rounds and emit stats + snapshots")
    run.add_argument("--config", help="JSON manifest file (flags override it)")
    run.add_argument("--world", help="world profile (linear|branching|combo-heavy) or JSON path")
    run.add_argument("--oracle", help="oracle persona (perfect|noisy|adversarial) or URL")
    run.add_argument("--seed", type=int)
    run.add_argument("--rounds", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--ablate", type=lambda s: s.split(","),
                     help="comma-separated switches: similarity_edges,reward_state,reward_novel")
    run.add_argument("--zones", type=int, help="world size knob for generated profiles")
    run.add_argument("--grounding-rate", dest="grounding_rate", type=float)
    run.add_argument("--resume", help="snapshot file to continue from")
    run.add_argument("--start-round", dest="start_round", type=int)
    run.set_defaults(func=cmd_run)

    export = sub.add_parser("export-graph", help="export a snapshot's graph as JSON or DOT")
    export.add_argument("snapshot")
    export.add_argument("--format", choices=["json", "dot"], default="json")
    export.add_argument("--out")
    export.set_defaults(func=cmd_export_graph)

    top = sub.add_parser("top-skills", help="highest-weight skill edges in a snapshot")
    top.add_argument("snapshot")
    top.add_argument("-k", type=int, default=10)
    top.set_defaults(func=cmd_top_skills)

    replay = sub.add_parser("replay", help="print a step-by-step narrative of a trace")
    replay.add_argument("trace")
    replay.set_defaults(func=cmd_replay)

    stats = sub.add_parser("stats", help="re-print the stats table of a run directory")
    stats.add_argument("dir")
    stats.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SkillGraphError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
