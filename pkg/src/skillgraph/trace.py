"""Episode traces: one record per decision step, replayable from JSONL.

A step can hold several execution attempts (graph-sampled tries, the UCT
fallback pick, augmentation candidates, refinement trials). Episode metrics
are computed from the trace alone so any saved run can be re-scored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractViolation

TRACE_SCHEMA_VERSION = 1

STAGE_KG = "kg-sample"
STAGE_UCT = "uct-fallback"
STAGE_AUGMENT = "augment"
STAGE_REFINE = "refine-trial"


@dataclass
class AttemptRecord:
    stage: str
    skill_id: int | None
    proposed_action: dict | None
    outcome: dict
    reward: dict
    src_node: int
    dst_node: int
    dst_is_new: bool
    probs: list[list] | None = None

    def to_dict(self) -> dict:
        d = {
            "stage": self.stage,
            "skill_id": self.skill_id,
            "proposed_action": self.proposed_action,
            "outcome": self.outcome,
            "reward": self.reward,
            "src_node": self.src_node,
            "dst_node": self.dst_node,
            "dst_is_new": self.dst_is_new,
        }
        if self.probs is not None:
            d["probs"] = self.probs
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttemptRecord":
        return cls(
            stage=d["stage"], skill_id=d["skill_id"], proposed_action=d["proposed_action"],
            outcome=d["outcome"], reward=d["reward"], src_node=d["src_node"],
            dst_node=d["dst_node"], dst_is_new=d["dst_is_new"], probs=d.get("probs"),
        )


@dataclass
class StepRecord:
    step: int
    node_id: int
    stage: str
    attempts: list[AttemptRecord] = field(default_factory=list)
    augmented: list[int] = field(default_factory=list)
    pruned: list[int] = field(default_factory=list)
    refined: list[list[int]] = field(default_factory=list)
    oracle_cost_delta: int = 0
    milestones_reached: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": "step",
            "step": self.step,
            "node_id": self.node_id,
            "stage": self.stage,
            "attempts": [a.to_dict() for a in self.attempts],
            "augmented": self.augmented,
            "pruned": self.pruned,
            "refined": self.refined,
            "oracle_cost_delta": self.oracle_cost_delta,
            "milestones_reached": self.milestones_reached,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(
            step=d["step"], node_id=d["node_id"], stage=d["stage"],
            attempts=[AttemptRecord.from_dict(a) for a in d["attempts"]],
            augmented=d["augmented"], pruned=d["pruned"], refined=d["refined"],
            oracle_cost_delta=d["oracle_cost_delta"],
            milestones_reached=d["milestones_reached"],
        )


@dataclass
class EpisodeTrace:
    episode: int
    seed: int
    step_cap: int
    steps: list[StepRecord] = field(default_factory=list)
    ended: str = "step-cap"  # or "milestones-complete"

    def header(self) -> dict:
        return {
            "kind": "header",
            "schema_version": TRACE_SCHEMA_VERSION,
            "episode": self.episode,
            "seed": self.seed,
            "step_cap": self.step_cap,
            "ended": self.ended,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.header(), sort_keys=True) + "\n")
            for step in self.steps:
                fh.write(json.dumps(step.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EpisodeTrace":
        with open(path, encoding="utf-8") as fh:
            lines = [line for line in fh if line.strip()]
        if not lines:
            raise ContractViolation(f"trace {path} is empty")
        header = json.loads(lines[0])
        if header.get("kind") != "header":
            raise ContractViolation(f"trace {path} does not start with a header record")
        version = header.get("schema_version")
        if version != TRACE_SCHEMA_VERSION:
            raise ContractViolation(
                f"trace schema_version {version} unsupported (expected {TRACE_SCHEMA_VERSION})"
            )
        trace = cls(episode=header["episode"], seed=header["seed"],
                    step_cap=header["step_cap"], ended=header.get("ended", "step-cap"))
        for line in lines[1:]:
            record = json.loads(line)
            if record.get("kind") != "step":
                raise ContractViolation(f"unexpected record kind {record.get('kind')!r}")
            trace.steps.append(StepRecord.from_dict(record))
        return trace


def episode_metrics(trace: EpisodeTrace) -> tuple[int, float, int]:
    """(distinct milestones, execution-responsive rate, oracle cost).

    The responsive rate is the fraction of executed attempts that changed
    the latent state; with no attempts at all it is reported as 1.0 by
    convention.
    """
    milestones: set[str] = set()
    executed = 0
    responsive = 0
    cost = 0
    for step in trace.steps:
        cost += step.oracle_cost_delta
        milestones.update(step.milestones_reached)
        for attempt in step.attempts:
            executed += 1
            if attempt.outcome.get("latent_changed"):
                responsive += 1
    rate = responsive / executed if executed else 1.0
    return len(milestones), rate, cost
